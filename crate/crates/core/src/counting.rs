//! Exhaustive lattice-point counts and weighted decoration sums over small
//! dyadic shells, reported against the corresponding power-law bounds.
//!
//! A frequency `k` lies in the shell of size `L` when `L <= |k| < 2L`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Mode};
use crate::tree::{build_tree, BranchingTree, Sign, TreeShape};

/// Largest shell size accepted by the counting routines by default.
pub const DEFAULT_SIZE_CAP: u32 = 16;
/// Exponent loss used when comparing against bounds that hold for every `eps > 0`.
pub const DEFAULT_EPSILON: f64 = 0.1;
/// Cap on enumerated assignments for a single count or sum.
pub const DEFAULT_COUNT_BUDGET: f64 = 5e9;

/// Frequencies in the dyadic shell `L <= |k| < 2L`.
pub fn shell(size: u32) -> Vec<Mode> {
    Ball::new(2 * size).modes().iter().copied().filter(|&k| in_shell(k, size)).collect()
}

#[inline]
pub fn in_shell(k: Mode, size: u32) -> bool {
    let (l2, k2) = ((size as i64) * (size as i64), k.norm_sq());
    l2 <= k2 && k2 < 4 * l2
}

fn check_dyadic(sizes: &[u32], cap: u32) -> Result<()> {
    for &l in sizes {
        if l == 0 || !l.is_power_of_two() {
            return Err(invalid("sizes", format!("{l} is not a dyadic size")));
        }
        if l > cap {
            return Err(invalid("sizes", format!("{l} exceeds the size cap {cap}")));
        }
    }
    Ok(())
}

/// Whether two slots with opposite signs carry the same frequency.
fn paired(signs: &[i32], modes: &[Mode]) -> bool {
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            if signs[i] + signs[j] == 0 && modes[i] == modes[j] {
                return true;
            }
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountQuery {
    pub sizes: Vec<u32>,
    pub signs: Vec<Sign>,
    pub target: Mode,
    pub kappa: i64,
}

impl CountQuery {
    pub fn new(sizes: Vec<u32>, signs: Vec<Sign>, target: Mode, kappa: i64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(invalid("sizes", "at least two vectors are required"));
        }
        if sizes.len() != signs.len() {
            return Err(invalid("signs", format!("{} signs for {} sizes", signs.len(), sizes.len())));
        }
        if sizes.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("sizes", "sizes must be non-increasing"));
        }
        check_dyadic(&sizes, u32::MAX)?;
        Ok(CountQuery { sizes, signs, target, kappa })
    }

    /// The same query with every sign, the momentum and the resonance negated.
    pub fn negated(&self) -> Self {
        CountQuery {
            sizes: self.sizes.clone(),
            signs: self.signs.iter().map(|s| s.flip()).collect(),
            target: -self.target,
            kappa: -self.kappa,
        }
    }
}

/// Number of unpaired tuples with `k_j` in shell `L_j`, `sum iota_j k_j = a`
/// and `sum iota_j |k_j|^2 = kappa`.
pub fn count_k(q: &CountQuery, cap: u32) -> Result<u64> {
    check_dyadic(&q.sizes, cap)?;
    let n = q.sizes.len();
    let signs: Vec<i32> = q.signs.iter().map(|s| s.value()).collect();
    let shells: Vec<Vec<Mode>> = q.sizes[1..].iter().map(|&l| shell(l)).collect();
    let work: f64 = shells.iter().map(|s| s.len() as f64).product();
    if work > DEFAULT_COUNT_BUDGET {
        return Err(Error::BudgetExceeded { requested: work, budget: DEFAULT_COUNT_BUDGET });
    }
    // k_1 is determined by the others through the momentum constraint.
    let mut modes = vec![Mode::ZERO; n];
    let mut count = 0u64;
    let mut idx = vec![0usize; n - 1];
    if shells.iter().any(|s| s.is_empty()) {
        return Ok(0);
    }
    loop {
        let mut rest = Mode::ZERO;
        let mut kappa = 0i64;
        for j in 1..n {
            let k = shells[j - 1][idx[j - 1]];
            modes[j] = k;
            rest = rest + k.scaled(signs[j]);
            kappa += signs[j] as i64 * k.norm_sq();
        }
        let k1 = (q.target - rest).scaled(signs[0]);
        if in_shell(k1, q.sizes[0]) && kappa + signs[0] as i64 * k1.norm_sq() == q.kappa {
            modes[0] = k1;
            if !paired(&signs, &modes) {
                count += 1;
            }
        }
        let mut j = 0;
        loop {
            if j == n - 1 {
                return Ok(count);
            }
            idx[j] += 1;
            if idx[j] < shells[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Where a reported supremum is attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Witness {
    Target { sizes: Vec<u32>, signs: Vec<Sign>, target: Mode, kappa: i64 },
    Tuple(Vec<Mode>),
    Profile(Vec<u32>),
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub empirical_sup: f64,
    pub stated_bound: f64,
    pub ratio: f64,
    pub witness: Witness,
}

impl BoundReport {
    pub fn new(empirical_sup: f64, stated_bound: f64, witness: Witness) -> Self {
        let ratio = if stated_bound > 0.0 {
            empirical_sup / stated_bound
        } else if empirical_sup == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundReport { empirical_sup, stated_bound, ratio, witness }
    }
}

/// Supremum of the three-vector count over all targets for one size/sign triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleSup {
    pub sizes: [u32; 3],
    pub signs: [Sign; 3],
    pub sup: u64,
    pub target: Mode,
    pub kappa: i64,
}

impl TripleSup {
    pub fn query(&self) -> CountQuery {
        CountQuery {
            sizes: self.sizes.to_vec(),
            signs: self.signs.to_vec(),
            target: self.target,
            kappa: self.kappa,
        }
    }

    pub fn bound(&self, epsilon: f64) -> f64 {
        (self.sizes[1] as f64).powf(1.0 + epsilon) * self.sizes[2] as f64
    }
}

#[derive(Clone, Copy)]
struct PairEntry {
    kappa: i32,
    k2: Mode,
    k3: Mode,
}

/// `sup_{a, kappa} K_{L1,L2,L3}(a, kappa)` by a full histogram over targets.
///
/// Pairs `(k2, k3)` are bucketed by `iota_2 k2 + iota_3 k3`; the target `a`
/// runs over one fundamental domain of the lattice symmetry group, which
/// preserves every shell and hence every count.
pub fn sup_count_three(sizes: [u32; 3], signs: [Sign; 3], cap: u32) -> Result<TripleSup> {
    check_dyadic(&sizes, cap)?;
    if sizes[0] < sizes[1] || sizes[1] < sizes[2] {
        return Err(invalid("sizes", "sizes must be non-increasing"));
    }
    let [i1, i2, i3] = signs.map(|s| s.value());
    let (s1, s2, s3) = (shell(sizes[0]), shell(sizes[1]), shell(sizes[2]));
    let r = (2 * sizes[1] - 1 + 2 * sizes[2] - 1) as i32;
    let width = (2 * r + 1) as usize;
    let slot = |b: Mode| ((b.kx + r) as usize) * width + (b.ky + r) as usize;

    let mut buckets: Vec<Vec<PairEntry>> = vec![Vec::new(); width * width];
    for &k2 in &s2 {
        for &k3 in &s3 {
            if i2 + i3 == 0 && k2 == k3 {
                continue;
            }
            let b = k2.scaled(i2) + k3.scaled(i3);
            let kappa = (i2 as i64 * k2.norm_sq() + i3 as i64 * k3.norm_sq()) as i32;
            buckets[slot(b)].push(PairEntry { kappa, k2, k3 });
        }
    }
    let mut offsets = Vec::with_capacity(width * width + 1);
    let mut entries = Vec::with_capacity(s2.len() * s3.len());
    offsets.push(0usize);
    for b in buckets {
        entries.extend(b);
        offsets.push(entries.len());
    }
    let check12 = i1 + i2 == 0 && sizes[0] == sizes[1];
    let check13 = i1 + i3 == 0 && sizes[0] == sizes[2];

    let l1 = 2 * sizes[0] as i64;
    let offset = 3 * l1 * l1;
    let amax = (2 * sizes[0] - 1) as i32 + r;
    let targets: Vec<Mode> = (0..=amax).flat_map(|ax| (0..=ax).map(move |ay| Mode::new(ax, ay))).collect();
    let best: Vec<(u64, i64)> = targets
        .par_iter()
        .map_init(
            || vec![0u32; (2 * offset + 1) as usize],
            |hist, &a| {
                for &k1 in &s1 {
                    let b = a - k1.scaled(i1);
                    if b.kx.abs() > r || b.ky.abs() > r {
                        continue;
                    }
                    let base = offset + i1 as i64 * k1.norm_sq();
                    let id = slot(b);
                    for e in &entries[offsets[id]..offsets[id + 1]] {
                        if (check12 && e.k2 == k1) || (check13 && e.k3 == k1) {
                            continue;
                        }
                        hist[(base + e.kappa as i64) as usize] += 1;
                    }
                }
                let mut top = (0u64, 0i64);
                for (i, h) in hist.iter_mut().enumerate() {
                    if *h as u64 > top.0 {
                        top = (*h as u64, i as i64 - offset);
                    }
                    *h = 0;
                }
                top
            },
        )
        .collect();
    let mut out = TripleSup { sizes, signs, sup: 0, target: Mode::ZERO, kappa: 0 };
    for (a, (c, kappa)) in targets.into_iter().zip(best) {
        if c > out.sup {
            out.sup = c;
            out.target = a;
            out.kappa = kappa;
        }
    }
    Ok(out)
}

/// Sign patterns of three vectors up to a global sign change.
pub const THREE_SIGN_PATTERNS: [[Sign; 3]; 4] = [
    [Sign::Plus, Sign::Plus, Sign::Plus],
    [Sign::Plus, Sign::Plus, Sign::Minus],
    [Sign::Plus, Sign::Minus, Sign::Plus],
    [Sign::Plus, Sign::Minus, Sign::Minus],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeVectorScan {
    pub epsilon: f64,
    pub rows: Vec<TripleSup>,
    /// `max sup / (L2^{1+eps} L3)` over all rows.
    pub constant: f64,
    pub worst: usize,
}

impl ThreeVectorScan {
    pub fn report(&self) -> BoundReport {
        let row = &self.rows[self.worst];
        BoundReport::new(
            row.sup as f64,
            row.bound(self.epsilon),
            Witness::Target { sizes: row.sizes.to_vec(), signs: row.signs.to_vec(), target: row.target, kappa: row.kappa },
        )
    }
}

/// Runs [`sup_count_three`] over every dyadic triple `max_size >= L1 >= L2 >= L3`
/// and every sign pattern.
pub fn three_vector_scan(max_size: u32, epsilon: f64) -> Result<ThreeVectorScan> {
    check_dyadic(&[max_size], u32::MAX)?;
    let dyadic: Vec<u32> = (0..).map(|j| 1u32 << j).take_while(|&l| l <= max_size).collect();
    let mut rows = Vec::new();
    for &l1 in &dyadic {
        for &l2 in dyadic.iter().filter(|&&l| l <= l1) {
            for &l3 in dyadic.iter().filter(|&&l| l <= l2) {
                for signs in THREE_SIGN_PATTERNS {
                    rows.push(sup_count_three([l1, l2, l3], signs, max_size)?);
                }
            }
        }
    }
    let mut constant = 0.0;
    let mut worst = 0;
    for (i, row) in rows.iter().enumerate() {
        let c = row.sup as f64 / row.bound(epsilon);
        if c > constant {
            constant = c;
            worst = i;
        }
    }
    Ok(ThreeVectorScan { epsilon, rows, constant, worst })
}

/// `|psi_{2s}| / (lambda_1^{2s-2} (|Omega| + lambda_3^2))` for a tuple with
/// alternating signs, or `None` when the denominator vanishes.
pub fn psi_bound_ratio(modes: &[Mode], s: f64) -> Option<f64> {
    let mut norms: Vec<i64> = modes.iter().map(|k| k.norm_sq()).collect();
    norms.sort_unstable_by(|a, b| b.cmp(a));
    let l1 = norms.first().copied().unwrap_or(0) as f64;
    let l3 = norms.get(2).copied().unwrap_or(0) as f64;
    let om = crate::energy::omega(modes).abs() as f64;
    let den = l1.powf(s - 1.0) * (om + l3);
    if den == 0.0 {
        return None;
    }
    Some(crate::energy::psi2s(modes, s).abs() / den)
}

/// Scans every admissible tuple of length `n` with `|k| <= max_norm` and
/// reports the largest [`psi_bound_ratio`] (normalized bound 1).
pub fn verify_psi_bound(max_norm: u32, s: f64, n: usize) -> Result<BoundReport> {
    if s <= 1.0 {
        return Err(invalid("s", format!("expected s > 1, got {s}")));
    }
    verify_psi_bound_any(max_norm, s, n)
}

/// As [`verify_psi_bound`] but without the `s > 1` restriction.
pub fn verify_psi_bound_any(max_norm: u32, s: f64, n: usize) -> Result<BoundReport> {
    if n < 2 || n % 2 != 0 {
        return Err(invalid("n", format!("tuple length must be even and >= 2, got {n}")));
    }
    let ball = Ball::new(max_norm);
    let work = (ball.len() as f64).powi(n as i32 - 1);
    if work > DEFAULT_COUNT_BUDGET {
        return Err(Error::BudgetExceeded { requested: work, budget: DEFAULT_COUNT_BUDGET });
    }
    let modes = ball.modes();
    let best: Vec<(f64, Vec<Mode>)> = modes
        .par_iter()
        .map(|&first| {
            let mut tuple = vec![Mode::ZERO; n];
            tuple[0] = first;
            let mut idx = vec![0usize; n - 2];
            let mut top = (0.0, Vec::new());
            loop {
                let mut acc = first;
                for j in 1..n - 1 {
                    let k = modes[idx[j - 1]];
                    tuple[j] = k;
                    acc = acc + k.scaled(if j % 2 == 0 { 1 } else { -1 });
                }
                // The last slot has sign -.
                let last = acc;
                if ball.contains(last) {
                    tuple[n - 1] = last;
                    if let Some(r) = psi_bound_ratio(&tuple, s) {
                        if r > top.0 {
                            top = (r, tuple.clone());
                        }
                    }
                }
                let mut j = 0;
                loop {
                    if j == n - 2 {
                        return top;
                    }
                    idx[j] += 1;
                    if idx[j] < modes.len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
            }
        })
        .collect();
    let mut top = (0.0, Vec::new());
    for b in best {
        if b.0 > top.0 {
            top = b;
        }
    }
    let witness = if top.1.is_empty() { Witness::Empty } else { Witness::Tuple(top.1) };
    Ok(BoundReport::new(top.0, 1.0, witness))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SumNorm {
    L1,
    L2,
}

/// Candidate frequencies of one slot of the constraint `sum iota k = 0`,
/// each with a multiplicity.
enum Slot {
    Shell(u32, Vec<Mode>),
    Weighted(HashMap<Mode, u64>, Vec<(Mode, u64)>),
}

impl Slot {
    fn len(&self) -> usize {
        match self {
            Slot::Shell(_, v) => v.len(),
            Slot::Weighted(_, v) => v.len(),
        }
    }

    fn get(&self, i: usize) -> (Mode, u64) {
        match self {
            Slot::Shell(_, v) => (v[i], 1),
            Slot::Weighted(_, v) => v[i],
        }
    }

    fn lookup(&self, k: Mode) -> u64 {
        match self {
            Slot::Shell(l, _) => in_shell(k, *l) as u64,
            Slot::Weighted(m, _) => m.get(&k).copied().unwrap_or(0),
        }
    }
}

/// Visits every assignment of the slots with `sum iota_j k_j = 0`; the slot
/// with the most candidates is solved for.
fn for_each_balanced(signs: &[i32], slots: &[Slot], budget: f64, mut f: impl FnMut(&[Mode], u64)) -> Result<()> {
    let n = slots.len();
    let solved = (0..n).max_by_key(|&j| (slots[j].len(), std::cmp::Reverse(j))).expect("slots");
    let free: Vec<usize> = (0..n).filter(|&j| j != solved).collect();
    let work: f64 = free.iter().map(|&j| slots[j].len() as f64).product();
    if work > budget {
        return Err(Error::BudgetExceeded { requested: work, budget });
    }
    if free.iter().any(|&j| slots[j].len() == 0) {
        return Ok(());
    }
    let mut modes = vec![Mode::ZERO; n];
    let mut idx = vec![0usize; free.len()];
    loop {
        let mut acc = Mode::ZERO;
        let mut mult = 1u64;
        for (i, &j) in free.iter().enumerate() {
            let (k, m) = slots[j].get(idx[i]);
            modes[j] = k;
            mult *= m;
            acc = acc + k.scaled(signs[j]);
        }
        let k = (-acc).scaled(signs[solved]);
        let m = slots[solved].lookup(k);
        if m > 0 {
            modes[solved] = k;
            f(&modes, mult * m);
        }
        let mut i = 0;
        loop {
            if i == free.len() {
                return Ok(());
            }
            idx[i] += 1;
            if idx[i] < slots[free[i]].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// `psi_{2s} / <Omega>` over a signed tuple.
fn weight(signs: &[i32], modes: &[Mode], s: f64) -> f64 {
    let mut psi = 0.0;
    let mut om = 0i64;
    for (&i, k) in signs.iter().zip(modes) {
        let n2 = k.norm_sq();
        psi += i as f64 * (n2 as f64).powf(s);
        om += i as i64 * n2;
    }
    psi / (1.0 + (om as f64).powi(2)).sqrt()
}

fn sorted_desc(sizes: &[u32]) -> Vec<f64> {
    let mut v: Vec<f64> = sizes.iter().map(|&l| l as f64).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Bound for the scale-one sums in the given norm.
pub fn scale1_bound(sizes: &[u32], s: f64, norm: SumNorm, epsilon: f64) -> f64 {
    let n = sorted_desc(sizes);
    let tail: f64 = n[3..].iter().product();
    match norm {
        SumNorm::L1 => {
            n[0].powf(2.0 * (s - 1.0))
                * (n[1].powi(2) * n[2].powi(2) + n[2].powi(3) * n[1].powf(1.0 + epsilon))
                * tail.powi(2)
        }
        SumNorm::L2 => {
            n[0].powf(2.0 * (s - 1.0)) * (n[1] * n[2] + n[2].powf(2.5) * n[1].powf(0.5 + epsilon)) * tail
        }
    }
}

/// Sum of `|psi_{2s}/<Omega>|` (or the root of the sum of squares) over
/// adapted decorations of the scale-one tree with the given leaf sizes
/// (pre-order, partner last) that have no pairing among the leaves.
pub fn weighted_sum_scale1(leaf_sizes: &[u32], s: f64, norm: SumNorm, epsilon: f64, budget: f64) -> Result<BoundReport> {
    if leaf_sizes.len() < 4 || leaf_sizes.len() % 2 != 0 {
        return Err(invalid("profile", format!("expected an even size >= 4, got {}", leaf_sizes.len())));
    }
    check_dyadic(leaf_sizes, u32::MAX)?;
    let tree = build_tree(&TreeShape::scale_one(leaf_sizes.len() - 1))?;
    let signs: Vec<i32> = tree.leaves().iter().map(|&l| tree.sign(l)).collect();
    let slots: Vec<Slot> = leaf_sizes.iter().map(|&l| Slot::Shell(l, shell(l))).collect();
    let mut total = 0.0;
    for_each_balanced(&signs, &slots, budget, |modes, _| {
        if paired(&signs, modes) {
            return;
        }
        let w = weight(&signs, modes, s).abs();
        total += match norm {
            SumNorm::L1 => w,
            SumNorm::L2 => w * w,
        };
    })?;
    let sup = match norm {
        SumNorm::L1 => total,
        SumNorm::L2 => total.sqrt(),
    };
    Ok(BoundReport::new(sup, scale1_bound(leaf_sizes, s, norm, epsilon), Witness::Profile(leaf_sizes.to_vec())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale2Report {
    pub report: BoundReport,
    /// Contribution of decorations with `iota_n0 k_n0 + iota_l' k_l' = 0` for some `l'` in `L_r`.
    pub degenerate: f64,
    pub degenerate_share: f64,
}

pub fn scale2_bound(sizes: &[u32], s: f64, epsilon: f64) -> f64 {
    let n = sorted_desc(sizes);
    let tail: f64 = n[3..].iter().product();
    n[0].powf(4.0 * s - 2.0 + epsilon) * n[2].powi(4) * tail.powi(2)
}

/// Sum of `|psi_{2s}/<Omega>|^2` over adapted decorations of a scale-two tree
/// with no pairing inside either generation. The branch leaves are summed
/// out first into the multiplicity of each `k_n0`.
pub fn weighted_sum_scale2(
    tree: &BranchingTree,
    leaf_sizes: &[u32],
    s: f64,
    epsilon: f64,
    budget: f64,
) -> Result<Scale2Report> {
    let b = tree.branch().ok_or_else(|| invalid("tree", "expected a scale-two tree"))?;
    let leaves = tree.leaves();
    if leaves.len() < 6 {
        return Err(invalid("tree", format!("expected size >= 6, got {}", leaves.len())));
    }
    if leaf_sizes.len() != leaves.len() {
        return Err(invalid("profile", format!("{} sizes for {} leaves", leaf_sizes.len(), leaves.len())));
    }
    check_dyadic(leaf_sizes, u32::MAX)?;
    let size_of = |node: usize| leaf_sizes[leaves.iter().position(|&l| l == node).expect("leaf")];

    // Multiplicity of k_n0 from the branch leaves.
    let kids = tree.branch_leaves();
    let kid_signs: Vec<i32> = kids.iter().map(|&c| tree.sign(c)).collect();
    let kid_shells: Vec<Vec<Mode>> = kids.iter().map(|&c| shell(size_of(c))).collect();
    let work: f64 = kid_shells.iter().map(|v| v.len() as f64).product();
    if work > budget {
        return Err(Error::BudgetExceeded { requested: work, budget });
    }
    let mut mult: HashMap<Mode, u64> = HashMap::new();
    if kid_shells.iter().all(|v| !v.is_empty()) {
        let mut idx = vec![0usize; kids.len()];
        let mut modes = vec![Mode::ZERO; kids.len()];
        'outer: loop {
            let mut acc = Mode::ZERO;
            for j in 0..kids.len() {
                modes[j] = kid_shells[j][idx[j]];
                acc = acc + modes[j].scaled(kid_signs[j]);
            }
            if !paired(&kid_signs, &modes) {
                *mult.entry(acc.scaled(tree.sign(b))).or_insert(0) += 1;
            }
            let mut j = 0;
            loop {
                if j == kids.len() {
                    break 'outer;
                }
                idx[j] += 1;
                if idx[j] < kid_shells[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }
    let mut listed: Vec<(Mode, u64)> = mult.iter().map(|(&k, &m)| (k, m)).collect();
    listed.sort();

    let gen = tree.root_generation();
    let signs: Vec<i32> = gen.iter().map(|&n| tree.sign(n)).collect();
    let pos_b = gen.iter().position(|&n| n == b).expect("branch in root generation");
    let slots: Vec<Slot> = gen
        .iter()
        .map(|&n| if n == b { Slot::Weighted(mult.clone(), listed.clone()) } else { Slot::Shell(size_of(n), shell(size_of(n))) })
        .collect();
    let leaf_pos: Vec<usize> = (0..gen.len()).filter(|&j| j != pos_b).collect();
    let leaf_signs: Vec<i32> = leaf_pos.iter().map(|&j| signs[j]).collect();
    let mut total = 0.0;
    let mut degenerate = 0.0;
    let mut leaf_modes = vec![Mode::ZERO; leaf_pos.len()];
    for_each_balanced(&signs, &slots, budget, |modes, m| {
        for (i, &j) in leaf_pos.iter().enumerate() {
            leaf_modes[i] = modes[j];
        }
        if paired(&leaf_signs, &leaf_modes) {
            return;
        }
        let w = weight(&signs, modes, s);
        let c = w * w * m as f64;
        total += c;
        let kb = modes[pos_b].scaled(signs[pos_b]);
        if leaf_pos.iter().any(|&j| kb + modes[j].scaled(signs[j]) == Mode::ZERO) {
            degenerate += c;
        }
    })?;
    let report = BoundReport::new(total, scale2_bound(leaf_sizes, s, epsilon), Witness::Profile(leaf_sizes.to_vec()));
    let degenerate_share = if total > 0.0 { degenerate / total } else { 0.0 };
    Ok(Scale2Report { report, degenerate, degenerate_share })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_partition_the_plane() {
        let total: usize = [1, 2, 4].iter().map(|&l| shell(l).len()).sum();
        let direct = Ball::new(8).modes().iter().filter(|k| (1..64).contains(&k.norm_sq())).count();
        assert_eq!(total, direct);
    }

    #[test]
    fn two_vector_example() {
        let q = CountQuery::new(vec![1, 1], vec![Sign::Plus, Sign::Minus], Mode::new(1, 0), 1).unwrap();
        assert_eq!(count_k(&q, DEFAULT_SIZE_CAP).unwrap(), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let q = CountQuery::new(vec![32, 1], vec![Sign::Plus, Sign::Minus], Mode::ZERO, 0).unwrap();
        assert!(count_k(&q, DEFAULT_SIZE_CAP).is_err());
    }
}
