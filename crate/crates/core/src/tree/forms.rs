use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::decoration::{for_each_decoration, DecorationBounds, Pairing};
use super::{build_tree, BranchingTree, Node, NodeKind, Sign, TreeShape};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Mode, SpectralField};

/// Parameters of the singular sets: `theta` sets the low-frequency threshold
/// `|k_{n0}|^theta + |k_{l'}|^theta`, `delta` the domination scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularParams {
    pub s: f64,
    pub theta: f64,
    pub delta: f64,
}

impl SingularParams {
    /// `theta = 1/(50 (n0 + 1))`, `delta = 1/(200 (n0 + s))` for `n0 = 2m - 1`.
    pub fn standard(n0: usize, s: f64) -> Self {
        let n0 = n0 as f64;
        SingularParams { s, theta: 1.0 / (50.0 * (n0 + 1.0)), delta: 1.0 / (200.0 * (n0 + s)) }
    }
}

/// One of the four cross-pairing patterns of a scale-two tree: the sign of
/// the branching node and the signs `(iota_{l'}, iota_{l''})` of the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignConfiguration {
    pub branch_sign: Sign,
    pub pair: (Sign, Sign),
}

impl SignConfiguration {
    pub const ALL: [SignConfiguration; 4] = [
        SignConfiguration { branch_sign: Sign::Plus, pair: (Sign::Minus, Sign::Plus) },
        SignConfiguration { branch_sign: Sign::Plus, pair: (Sign::Plus, Sign::Minus) },
        SignConfiguration { branch_sign: Sign::Minus, pair: (Sign::Minus, Sign::Plus) },
        SignConfiguration { branch_sign: Sign::Minus, pair: (Sign::Plus, Sign::Minus) },
    ];

    /// The scale-two tree with `n0` children per branching node, and the
    /// first leaves `l' in L_r`, `l'' in L_{n0}` carrying the pair signs.
    pub fn realize(&self, n0: usize) -> Result<(BranchingTree, usize, usize)> {
        let position = if self.branch_sign == Sign::Plus { 0 } else { 1 };
        let tree = build_tree(&TreeShape::scale_two(n0, position))?;
        let pick = |group: Vec<usize>, sg: Sign| group.into_iter().find(|&l| tree.node(l).sign == sg);
        let lp = pick(tree.root_leaves(), self.pair.0);
        let lpp = pick(tree.branch_leaves(), self.pair.1);
        match (lp, lpp) {
            (Some(a), Some(b)) => Ok((tree, a, b)),
            _ => Err(invalid("configuration", "no leaves with the requested signs")),
        }
    }

    pub fn label(&self) -> String {
        let c = |s: Sign| if s == Sign::Plus { '+' } else { '-' };
        format!("S^{}{}(T{})", c(self.pair.0), c(self.pair.1), c(self.branch_sign))
    }
}

struct Powers {
    ball: Arc<Ball>,
    norm_sq: Vec<i64>,
    pow_s: Vec<f64>,
}

impl Powers {
    fn new(cutoff: u32, s: f64) -> Self {
        let ball = Ball::shared(cutoff);
        let norm_sq: Vec<i64> = ball.modes().iter().map(|k| k.norm_sq()).collect();
        let pow_s = norm_sq.iter().map(|&n| (n as f64).powf(s)).collect();
        Powers { ball, norm_sq, pow_s }
    }
}

fn leaf_values(tree: &BranchingTree, inputs: &[&SpectralField], ball: &Ball) -> Result<Vec<Vec<Complex64>>> {
    let leaves = tree.leaves();
    if inputs.len() != leaves.len() {
        return Err(invalid("inputs", format!("{} inputs for {} leaves", inputs.len(), leaves.len())));
    }
    let mut out = vec![Vec::new(); tree.len()];
    for (&l, a) in leaves.iter().zip(inputs) {
        out[l] = ball
            .modes()
            .iter()
            .map(|&k| {
                let c = a.get(k);
                if tree.sign(l) > 0 {
                    c
                } else {
                    c.conj()
                }
            })
            .collect();
    }
    Ok(out)
}

/// Sum over decorations of the root generation, with node values given by
/// tables over the ball and weight `w(psi, Omega)`.
fn root_generation_sum(
    tree: &BranchingTree,
    values: &[Vec<Complex64>],
    pw: &Powers,
    weight: &dyn Fn(f64, i64) -> Option<f64>,
) -> Complex64 {
    let children = tree.node(0).children.clone();
    let partner = tree.partner();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut stack = vec![0usize; children.len()];
    let nb = pw.ball.len();
    if nb == 0 {
        return acc;
    }
    loop {
        let mut k = Mode::ZERO;
        let mut om = 0i64;
        let mut psi = 0.0;
        let mut prod = Complex64::new(1.0, 0.0);
        for (j, &c) in children.iter().enumerate() {
            let i = stack[j];
            let sg = tree.sign(c);
            k = k + pw.ball.mode(i).scaled(sg);
            om += sg as i64 * pw.norm_sq[i];
            psi += sg as f64 * pw.pow_s[i];
            prod *= values[c][i];
        }
        if let Some(ip) = pw.ball.index_of(k) {
            om -= pw.norm_sq[ip];
            psi -= pw.pow_s[ip];
            if let Some(w) = weight(psi, om) {
                acc += prod * values[partner][ip] * w;
            }
        }
        let mut j = children.len();
        loop {
            if j == 0 {
                return acc;
            }
            j -= 1;
            stack[j] += 1;
            if stack[j] < nb {
                break;
            }
            stack[j] = 0;
        }
    }
}

/// Energy multilinear form: `sum (psi/Omega) 1_{Omega != 0} prod a^iota` at
/// scale two, `sum psi 1_{Omega = 0} prod a^iota` at scale one, over all
/// decorations in the ball. `inputs` follow the leaf pre-order.
pub fn tree_energy_form(
    tree: &BranchingTree,
    inputs: &[&SpectralField],
    s: f64,
    cutoff: u32,
) -> Result<Complex64> {
    let pw = Powers::new(cutoff, s);
    let mut values = leaf_values(tree, inputs, &pw.ball)?;
    let nb = pw.ball.len() as f64;
    let arity = tree.node(0).children.len().max(tree.branch().map_or(0, |b| tree.node(b).children.len()));
    let work = nb.powi(arity as i32);
    if work > super::DEFAULT_DECORATION_BUDGET {
        return Err(Error::BudgetExceeded { requested: work, budget: super::DEFAULT_DECORATION_BUDGET });
    }
    if let Some(b) = tree.branch() {
        // Collapse the branching node: B(k) = sum over its children with iota_b k = sum iota_c k_c.
        let kids = tree.node(b).children.clone();
        let mut table = vec![Complex64::new(0.0, 0.0); pw.ball.len()];
        let mut stack = vec![0usize; kids.len()];
        'outer: loop {
            let mut k = Mode::ZERO;
            let mut prod = Complex64::new(1.0, 0.0);
            for (j, &c) in kids.iter().enumerate() {
                k = k + pw.ball.mode(stack[j]).scaled(tree.sign(c));
                prod *= values[c][stack[j]];
            }
            if let Some(i) = pw.ball.index_of(k.scaled(tree.sign(b))) {
                table[i] += prod;
            }
            let mut j = kids.len();
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                stack[j] += 1;
                if stack[j] < pw.ball.len() {
                    break;
                }
                stack[j] = 0;
            }
        }
        values[b] = table;
        Ok(root_generation_sum(tree, &values, &pw, &|psi, om| (om != 0).then(|| psi / om as f64)))
    } else {
        Ok(root_generation_sum(tree, &values, &pw, &|psi, om| (om == 0).then_some(psi)))
    }
}

fn root_psi_omega(tree: &BranchingTree, modes: &[Mode], s: f64) -> (f64, i64) {
    let mut psi = 0.0;
    let mut om = 0i64;
    for n in tree.root_generation() {
        let sg = tree.sign(n);
        let k2 = modes[n].norm_sq();
        om += sg as i64 * k2;
        psi += sg as f64 * (k2 as f64).powf(s);
    }
    (psi, om)
}

/// [`tree_energy_form`] by plain enumeration of full decorations.
pub fn tree_energy_form_enumerated(
    tree: &BranchingTree,
    inputs: &[&SpectralField],
    s: f64,
    cutoff: u32,
) -> Result<Complex64> {
    let leaves = tree.leaves();
    if inputs.len() != leaves.len() {
        return Err(invalid("inputs", format!("{} inputs for {} leaves", inputs.len(), leaves.len())));
    }
    let scale = tree.scale();
    let mut acc = Complex64::new(0.0, 0.0);
    for_each_decoration(tree, &DecorationBounds::ball(cutoff), super::DEFAULT_DECORATION_BUDGET, |m| {
        let (psi, om) = root_psi_omega(tree, m, s);
        let w = match scale {
            2 if om != 0 => psi / om as f64,
            1 if om == 0 => psi,
            _ => return,
        };
        let mut prod = Complex64::new(w, 0.0);
        for (&l, a) in leaves.iter().zip(inputs) {
            let c = a.get(m[l]);
            prod *= if tree.sign(l) > 0 { c } else { c.conj() };
        }
        acc += prod;
    })?;
    Ok(acc)
}

fn check_pair(tree: &BranchingTree, lp: usize, lpp: usize) -> Result<()> {
    if tree.branch().is_none() {
        return Err(invalid("tree", "singular sets need a scale-two tree"));
    }
    if !tree.root_leaves().contains(&lp) {
        return Err(invalid("l'", format!("leaf {lp} is not in L_r")));
    }
    if !tree.branch_leaves().contains(&lpp) {
        return Err(invalid("l''", format!("leaf {lpp} is not in L_n0")));
    }
    if tree.sign(lp) + tree.sign(lpp) != 0 {
        return Err(invalid("pair", "l' and l'' must carry opposite signs"));
    }
    Ok(())
}

/// Membership of a decoration in the singular set `Lambda_{l', l''}`
/// (thresholds are non-strict).
pub fn singular_set_member(
    tree: &BranchingTree,
    modes: &[Mode],
    lp: usize,
    lpp: usize,
    params: &SingularParams,
) -> Result<bool> {
    check_pair(tree, lp, lpp)?;
    let (_, om) = root_psi_omega(tree, modes, params.s);
    Ok(om != 0 && thresholds_hold(tree, modes, lp, lpp, params.theta))
}

/// All conditions of `Lambda_{l', l''}` except `Omega(k_r) != 0`.
fn thresholds_hold(tree: &BranchingTree, modes: &[Mode], lp: usize, lpp: usize, theta: f64) -> bool {
    if modes[lp] != modes[lpp] {
        return false;
    }
    let b = tree.branch().expect("scale two");
    let threshold = modes[b].norm().powf(theta) + modes[lp].norm().powf(theta);
    let low_r: f64 = tree.root_leaves().iter().filter(|&&l| l != lp).map(|&l| modes[l].norm()).sum();
    let low_b: f64 = tree.branch_leaves().iter().filter(|&&l| l != lpp).map(|&l| modes[l].norm()).sum();
    low_r <= threshold && low_b <= threshold
}

/// `psi^0 / Omega^0` built from `k_{n0}` and `k_{l'}`, or `None` when
/// `Omega^0 = 0`.
fn base_ratio(tree: &BranchingTree, modes: &[Mode], lp: usize, s: f64) -> Option<f64> {
    let b = tree.branch().expect("scale two");
    let (sb, sl) = (tree.sign(b) as f64, tree.sign(lp) as f64);
    let (xb, xl) = (modes[b].norm_sq() as f64, modes[lp].norm_sq() as f64);
    let om0 = sb * xb + sl * xl;
    if om0 == 0.0 {
        return None;
    }
    Some((sb * xb.powf(s) + sl * xl.powf(s)) / om0)
}

/// `psi^0 / Omega^0` extended continuously across `Omega^0 = 0`: with
/// opposite signs it is the divided difference of `x -> x^s` at
/// `|k_{n0}|^2, |k_{l'}|^2`, which tends to `s |k|^{2s-2}`.
fn base_ratio_extended(tree: &BranchingTree, modes: &[Mode], lp: usize, s: f64) -> f64 {
    base_ratio(tree, modes, lp, s).unwrap_or_else(|| {
        let x = modes[lp].norm_sq() as f64;
        if x == 0.0 {
            0.0
        } else {
            s * x.powf(s - 1.0)
        }
    })
}

/// `Psi(k_r) = psi/Omega - psi^0/Omega^0`. Both denominators must be nonzero.
pub fn psi_weight(tree: &BranchingTree, modes: &[Mode], lp: usize, s: f64) -> Result<f64> {
    if tree.branch().is_none() || !tree.root_leaves().contains(&lp) {
        return Err(invalid("l'", "Psi needs a scale-two tree and l' in L_r"));
    }
    let (psi, om) = root_psi_omega(tree, modes, s);
    if om == 0 {
        return Err(Error::DegenerateDenominator("Omega(k_r) = 0"));
    }
    let base = base_ratio(tree, modes, lp, s).ok_or(Error::DegenerateDenominator("Omega^0 = 0"))?;
    Ok(psi / om as f64 - base)
}

/// The decorations of `Lambda_{l', l''}` together with those failing only
/// `Omega(k_r) != 0`, stored as ball indices per leaf.
pub struct SingularSet {
    leaves: Vec<usize>,
    pw: Powers,
    entries: Vec<u32>,
    ratio: Vec<f64>,
    base: Vec<f64>,
    resonant: Vec<bool>,
    base_degenerate: usize,
    tree_signs: Vec<i32>,
}

impl SingularSet {
    pub fn new(tree: &BranchingTree, lp: usize, lpp: usize, params: &SingularParams, cutoff: u32) -> Result<Self> {
        check_pair(tree, lp, lpp)?;
        let pw = Powers::new(cutoff, params.s);
        let leaves = tree.leaves();
        let b = tree.branch().expect("checked");
        // Every low leaf satisfies |k| <= |k_n0|^theta + |k_l'|^theta <= 2 N^theta.
        let low_radius = 2.0 * (cutoff.max(1) as f64).powf(params.theta);
        let small: Vec<Mode> = pw
            .ball
            .modes()
            .iter()
            .copied()
            .filter(|k| k.norm() <= low_radius)
            .collect();
        let low: Vec<usize> = leaves.iter().copied().filter(|&l| l != lp && l != lpp).collect();
        let work = pw.ball.len() as f64 * (small.len() as f64).powi(low.len() as i32);
        if work > super::DEFAULT_DECORATION_BUDGET {
            return Err(Error::BudgetExceeded { requested: work, budget: super::DEFAULT_DECORATION_BUDGET });
        }
        let mut set = SingularSet {
            leaves: leaves.clone(),
            entries: Vec::new(),
            ratio: Vec::new(),
            base: Vec::new(),
            resonant: Vec::new(),
            base_degenerate: 0,
            tree_signs: (0..tree.len()).map(|i| tree.sign(i)).collect(),
            pw,
        };
        let mut modes = vec![Mode::ZERO; tree.len()];
        let mut stack = vec![0usize; low.len()];
        for &kappa in set.pw.ball.modes() {
            modes[lp] = kappa;
            modes[lpp] = kappa;
            stack.iter_mut().for_each(|x| *x = 0);
            loop {
                for (j, &l) in low.iter().enumerate() {
                    modes[l] = small[stack[j]];
                }
                let kb = tree
                    .node(b)
                    .children
                    .iter()
                    .fold(Mode::ZERO, |acc, &c| acc + modes[c].scaled(tree.sign(c)))
                    .scaled(tree.sign(b));
                modes[b] = kb;
                let kr = tree.node(0).children.iter().fold(Mode::ZERO, |acc, &c| acc + modes[c].scaled(tree.sign(c)));
                modes[0] = kr;
                let partner_ok = modes[tree.partner()] == kr;
                if partner_ok
                    && set.pw.ball.contains(kb)
                    && set.pw.ball.contains(kr)
                    && thresholds_hold(tree, &modes, lp, lpp, params.theta)
                {
                    let (psi, om) = root_psi_omega(tree, &modes, params.s);
                    if base_ratio(tree, &modes, lp, params.s).is_none() {
                        set.base_degenerate += 1;
                    }
                    for &l in &set.leaves {
                        set.entries.push(set.pw.ball.index_of(modes[l]).expect("leaf in ball") as u32);
                    }
                    set.resonant.push(om == 0);
                    set.ratio.push(if om == 0 { 0.0 } else { psi / om as f64 });
                    set.base.push(base_ratio_extended(tree, &modes, lp, params.s));
                }
                let mut j = low.len();
                let mut done = true;
                while j > 0 {
                    j -= 1;
                    stack[j] += 1;
                    if stack[j] < small.len() {
                        done = false;
                        break;
                    }
                    stack[j] = 0;
                }
                if done {
                    break;
                }
            }
        }
        Ok(set)
    }

    /// Number of decorations in `Lambda_{l', l''}`.
    pub fn len(&self) -> usize {
        self.resonant.iter().filter(|r| !**r).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decorations excluded only by `Omega(k_r) = 0`.
    pub fn resonant_len(&self) -> usize {
        self.resonant.iter().filter(|r| **r).count()
    }

    /// Decorations in `Lambda_{l', l''}` with `Omega^0 = 0`.
    pub fn base_degenerate(&self) -> usize {
        self.base_degenerate
    }

    fn products(&self, v: &SpectralField) -> Vec<Complex64> {
        let vals: Vec<Complex64> = self.pw.ball.modes().iter().map(|&k| v.get(k)).collect();
        let w = self.leaves.len();
        (0..self.resonant.len())
            .map(|e| {
                let mut p = Complex64::new(1.0, 0.0);
                for (j, &l) in self.leaves.iter().enumerate() {
                    let c = vals[self.entries[e * w + j] as usize];
                    p *= if self.tree_signs[l] > 0 { c } else { c.conj() };
                }
                p
            })
            .collect()
    }

    /// `(S, sum Psi prod v, sum psi^0/Omega^0 prod v)` over `Lambda`, and the
    /// last sum over the decorations removed by `Omega(k_r) != 0`.
    fn sums(&self, v: &SpectralField) -> [Complex64; 4] {
        let prods = self.products(v);
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (e, p) in prods.iter().enumerate() {
            if self.resonant[e] {
                out[3] += p * self.base[e];
            } else {
                out[0] += p * self.ratio[e];
                out[1] += p * (self.ratio[e] - self.base[e]);
                out[2] += p * self.base[e];
            }
        }
        out
    }
}

/// `S_{l', l''}(T)(v)`: the form restricted to `Lambda_{l', l''}`.
pub fn singular_sum(
    v: &SpectralField,
    tree: &BranchingTree,
    lp: usize,
    lpp: usize,
    params: &SingularParams,
    cutoff: u32,
) -> Result<Complex64> {
    Ok(SingularSet::new(tree, lp, lpp, params, cutoff)?.sums(v)[0])
}

/// Outcome of the cross-pairing cancellation test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    /// `|Im D|` with `D = S - sum_Lambda Psi prod v = sum_Lambda (psi^0/Omega^0) prod v`.
    pub residual: f64,
    /// `|D - (S - sum Psi prod v)|`: agreement of the two evaluations of `D`.
    pub consistency: f64,
    /// `|Im|` of `D` plus the same sum over decorations excluded only by
    /// `Omega(k_r) != 0`.
    pub completed_residual: f64,
    /// Difference between the completed sum and its squared-modulus rewriting.
    pub rewrite_gap: f64,
    pub singular_value: [f64; 2],
    pub decorations: usize,
    pub resonant_decorations: usize,
    pub degenerate_base: usize,
}

/// Evaluates `D` for one field on a precomputed singular set.
pub fn cancellation_on(set: &SingularSet, tree: &BranchingTree, lpp: usize, v: &SpectralField) -> CancellationReport {
    let [s, psi, d, res] = set.sums(v);
    let completed = d + res;
    let rewrite = squared_modulus_rewrite(set, tree, lpp, v);
    CancellationReport {
        residual: d.im.abs(),
        consistency: (d - (s - psi)).norm(),
        completed_residual: completed.im.abs(),
        rewrite_gap: (completed - rewrite).norm(),
        singular_value: [s.re, s.im],
        decorations: set.len(),
        resonant_decorations: set.resonant_len(),
        degenerate_base: set.base_degenerate(),
    }
}

/// `sum_{k_{n0}, k_{l''}} (psi^0/Omega^0) |v_{k_{l''}}|^2 |sum_{S(k_{n0}, k_{l''})} prod v^iota|^2`.
fn squared_modulus_rewrite(set: &SingularSet, tree: &BranchingTree, lpp: usize, v: &SpectralField) -> f64 {
    use std::collections::BTreeMap;
    let b = tree.branch().expect("scale two");
    let w = set.leaves.len();
    let pos = |node: usize| set.leaves.iter().position(|&l| l == node).expect("leaf");
    let ipp = pos(lpp);
    let kids: Vec<(usize, usize)> = tree
        .node(b)
        .children
        .iter()
        .filter(|&&c| c != lpp)
        .map(|&c| (c, pos(c)))
        .collect();
    // Group the Y-side assignments by (k_{n0}, k_{l''}); each distinct assignment counts once.
    let mut blocks: BTreeMap<(Mode, Mode), (f64, BTreeMap<Vec<u32>, Complex64>)> = BTreeMap::new();
    for e in 0..set.resonant.len() {
        let row = &set.entries[e * w..(e + 1) * w];
        let kappa = set.pw.ball.mode(row[ipp] as usize);
        let mut kb = Mode::ZERO;
        let mut key = Vec::with_capacity(kids.len());
        let mut prod = Complex64::new(1.0, 0.0);
        for &(c, j) in &kids {
            let k = set.pw.ball.mode(row[j] as usize);
            key.push(row[j]);
            let val = v.get(k);
            prod *= if tree.sign(c) > 0 { val } else { val.conj() };
            kb = kb + k.scaled(tree.sign(c));
        }
        kb = (kb + kappa.scaled(tree.sign(lpp))).scaled(tree.sign(b));
        let entry = blocks.entry((kb, kappa)).or_insert((set.base[e], BTreeMap::new()));
        entry.1.insert(key, prod);
    }
    blocks
        .iter()
        .map(|((_, kappa), (base, ys))| {
            let a: Complex64 = ys.values().sum();
            base * v.get(*kappa).norm_sqr() * a.norm_sqr()
        })
        .sum()
}

/// Checks that `Im S_{l', l''} = Im sum_Lambda Psi prod v` for the field `v`.
pub fn cancellation_check(
    v: &SpectralField,
    tree: &BranchingTree,
    lp: usize,
    lpp: usize,
    params: &SingularParams,
    cutoff: u32,
) -> Result<CancellationReport> {
    let set = SingularSet::new(tree, lp, lpp, params, cutoff)?;
    Ok(cancellation_on(&set, tree, lpp, v))
}

/// `T_e(v)` minus all cross-pairing singular sums.
pub fn remainder_form(v: &SpectralField, tree: &BranchingTree, params: &SingularParams, cutoff: u32) -> Result<Complex64> {
    let b = tree.branch().ok_or_else(|| invalid("tree", "the remainder needs a scale-two tree"))?;
    if tree.root_leaves().len() != tree.node(b).children.len() {
        return Err(invalid("tree", "both generations must have the same number of leaves"));
    }
    let inputs = vec![v; tree.size()];
    let mut total = tree_energy_form(tree, &inputs, params.s, cutoff)?;
    for lp in tree.root_leaves() {
        for lpp in tree.branch_leaves() {
            if tree.sign(lp) + tree.sign(lpp) == 0 {
                total -= singular_sum(v, tree, lp, lpp, params, cutoff)?;
            }
        }
    }
    Ok(total)
}

/// Removes the paired leaves, keeping the remaining signs. The result must
/// still be a valid tree: odd child counts, balanced signs, partner kept.
pub fn cut_paired_leaves(tree: &BranchingTree, pairing: &Pairing) -> Result<BranchingTree> {
    let pairing = Pairing::new(tree, pairing.pairs.clone())?;
    let mut removed = vec![false; tree.len()];
    for &(a, b) in &pairing.pairs {
        removed[a] = true;
        removed[b] = true;
    }
    if removed[tree.partner()] {
        return Err(Error::InvalidTree("cutting the partner leaf leaves the root with an even child count".into()));
    }
    let mut new_id = vec![usize::MAX; tree.len()];
    let mut next = 0;
    for i in 0..tree.len() {
        if !removed[i] {
            new_id[i] = next;
            next += 1;
        }
    }
    let nodes: Vec<Node> = (0..tree.len())
        .filter(|&i| !removed[i])
        .map(|i| {
            let n = tree.node(i);
            Node {
                kind: n.kind,
                sign: n.sign,
                parent: n.parent.map(|p| new_id[p]),
                children: n.children.iter().filter(|&&c| !removed[c]).map(|&c| new_id[c]).collect(),
            }
        })
        .collect();
    if nodes.iter().any(|n| n.kind == NodeKind::Branch && n.children.is_empty()) {
        return Err(Error::InvalidTree("a branching node lost all of its children".into()));
    }
    BranchingTree::from_nodes(nodes)
}
