//! Modified energy `E_s = 1/2 |||u|||^2 + R_s` and its time derivative.
//!
//! Tuples `(k_1, ..., k_{2m})` carry alternating signs `+, -, +, ...` and
//! satisfy `k_1 - k_2 + ... - k_{2m} = 0`; `Omega` and `psi_{2s}` are the
//! signed sums of `|k_j|^2` and `|k_j|^{2s}`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::linear_propagate;
use crate::grid::PowerKernel;
use crate::lattice::{sobolev_norm, Ball, Mode, NormConvention, SpectralField};

/// Default cap on `|ball|^{2m-1}` for tuple enumerations.
pub const DEFAULT_TUPLE_BUDGET: f64 = 2e8;

fn sign(j: usize) -> i64 {
    if j % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `Omega = sum_j iota_j |k_j|^2`.
pub fn omega(modes: &[Mode]) -> i64 {
    modes.iter().enumerate().map(|(j, k)| sign(j) * k.norm_sq()).sum()
}

/// `psi_{2s} = sum_j iota_j |k_j|^{2s}`.
pub fn psi2s(modes: &[Mode], s: f64) -> f64 {
    modes
        .iter()
        .enumerate()
        .map(|(j, k)| sign(j) as f64 * (k.norm_sq() as f64).powf(s))
        .sum()
}

/// Whether an alternating tuple has even length and zero signed sum.
pub fn is_admissible(modes: &[Mode]) -> bool {
    if modes.is_empty() || modes.len() % 2 != 0 {
        return false;
    }
    let total = modes
        .iter()
        .enumerate()
        .fold(Mode::ZERO, |acc, (j, &k)| acc + k.scaled(sign(j) as i32));
    total == Mode::ZERO
}

/// `u^iota`: the coefficient itself for even slots, its conjugate for odd ones.
#[inline]
fn signed(c: Complex64, slot: usize) -> Complex64 {
    if slot % 2 == 0 {
        c
    } else {
        c.conj()
    }
}

fn check_budget(ball_len: usize, degree: u32, budget: f64) -> Result<()> {
    let requested = (ball_len as f64).powi(2 * degree as i32 - 1);
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    Ok(())
}

/// All admissible `2m`-tuples with every entry in the ball, as ball indices.
pub struct TupleTable {
    ball: Arc<Ball>,
    degree: u32,
    idx: Vec<u32>,
    omega: Vec<i64>,
}

impl TupleTable {
    pub fn new(cutoff: u32, degree: u32, budget: f64) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("degree", "m must be at least 1"));
        }
        let ball = Ball::shared(cutoff);
        check_budget(ball.len(), degree, budget)?;
        let width = 2 * degree as usize;
        let mut idx = Vec::new();
        let mut omega = Vec::new();
        let mut current = vec![0u32; width];
        fill(&ball, &mut current, 0, Mode::ZERO, 0, &mut idx, &mut omega);
        Ok(TupleTable { ball, degree, idx, omega })
    }

    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn width(&self) -> usize {
        2 * self.degree as usize
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn indices(&self, t: usize) -> &[u32] {
        let w = self.width();
        &self.idx[t * w..(t + 1) * w]
    }

    pub fn omega(&self, t: usize) -> i64 {
        self.omega[t]
    }

    pub fn modes(&self, t: usize) -> Vec<Mode> {
        self.indices(t).iter().map(|&i| self.ball.mode(i as usize)).collect()
    }
}

fn fill(
    ball: &Ball,
    current: &mut [u32],
    slot: usize,
    partial: Mode,
    partial_omega: i64,
    idx: &mut Vec<u32>,
    omega: &mut Vec<i64>,
) {
    let width = current.len();
    if slot == width - 1 {
        // The last (conjugated) entry equals the signed sum of the others.
        if let Some(i) = ball.index_of(partial) {
            current[slot] = i as u32;
            idx.extend_from_slice(current);
            omega.push(partial_omega - partial.norm_sq());
        }
        return;
    }
    let sg = sign(slot);
    for (i, &k) in ball.modes().iter().enumerate() {
        current[slot] = i as u32;
        fill(
            ball,
            current,
            slot + 1,
            partial + k.scaled(sg as i32),
            partial_omega + sg * k.norm_sq(),
            idx,
            omega,
        );
    }
}

/// Tuple weights for a fixed `(N, m, s)`, reusable across fields.
pub struct EnergyModel {
    table: TupleTable,
    s: f64,
    nonres: Vec<u32>,
    nonres_weight: Vec<f64>,
    res: Vec<u32>,
    res_psi: Vec<f64>,
}

/// Scratch state for [`EnergyModel`] evaluations (one per thread).
pub struct EnergyWorkspace {
    kernel: PowerKernel,
}

/// The three contributions to `d/dt E_{s,t}(v(t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTerms {
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
}

impl DerivativeTerms {
    pub fn total(&self) -> f64 {
        self.term_i + self.term_ii + self.term_iii
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub h_s_half_sq: f64,
    pub r_s: f64,
    pub e_s: f64,
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub q_n: f64,
}

impl EnergyModel {
    pub fn new(cutoff: u32, degree: u32, s: f64) -> Result<Self> {
        Self::with_budget(cutoff, degree, s, DEFAULT_TUPLE_BUDGET)
    }

    pub fn with_budget(cutoff: u32, degree: u32, s: f64, budget: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(invalid("s", format!("need a finite s >= 0, got {s}")));
        }
        let table = TupleTable::new(cutoff, degree, budget)?;
        let pow: Vec<f64> = table
            .ball()
            .modes()
            .iter()
            .map(|k| (k.norm_sq() as f64).powf(s))
            .collect();
        let (mut nonres, mut nonres_weight, mut res, mut res_psi) = (vec![], vec![], vec![], vec![]);
        for t in 0..table.len() {
            let psi: f64 = table
                .indices(t)
                .iter()
                .enumerate()
                .map(|(j, &i)| sign(j) as f64 * pow[i as usize])
                .sum();
            let om = table.omega(t);
            if om == 0 {
                res.push(t as u32);
                res_psi.push(psi);
            } else {
                nonres.push(t as u32);
                nonres_weight.push(psi / om as f64);
            }
        }
        Ok(EnergyModel { table, s, nonres, nonres_weight, res, res_psi })
    }

    pub fn cutoff(&self) -> u32 {
        self.table.ball().cutoff()
    }

    pub fn degree(&self) -> u32 {
        self.table.degree()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn table(&self) -> &TupleTable {
        &self.table
    }

    pub fn workspace(&self) -> Result<EnergyWorkspace> {
        Ok(EnergyWorkspace { kernel: PowerKernel::projected(self.cutoff(), self.degree())? })
    }

    fn prepare<'a>(&self, u: &'a SpectralField) -> Result<std::borrow::Cow<'a, SpectralField>> {
        if !u.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(if u.cutoff() == self.cutoff() {
            std::borrow::Cow::Borrowed(u)
        } else {
            std::borrow::Cow::Owned(u.with_cutoff(self.cutoff()))
        })
    }

    /// `sum_{Omega != 0} (psi/Omega) prod a_j^{iota_j}`, where slot `j` reads
    /// from `fields[j]`.
    fn nonresonant_form(&self, fields: &[&[Complex64]]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&t, &w) in self.nonres.iter().zip(&self.nonres_weight) {
            let ix = self.table.indices(t as usize);
            let mut prod = signed(fields[0][ix[0] as usize], 0);
            for j in 1..ix.len() {
                prod *= signed(fields[j][ix[j] as usize], j);
            }
            acc += prod * w;
        }
        acc
    }

    /// Raw accumulator `sum_{Omega != 0} (psi/Omega) prod u^iota`; real up to
    /// rounding.
    pub fn correction_accumulator(&self, u: &SpectralField) -> Result<Complex64> {
        let u = self.prepare(u)?;
        let c = u.coeffs();
        let fields = vec![c; self.table.width()];
        Ok(self.nonresonant_form(&fields))
    }

    /// Raw accumulator `sum_{Omega = 0} psi prod u^iota`; imaginary up to
    /// rounding.
    pub fn resonant_accumulator(&self, u: &SpectralField) -> Result<Complex64> {
        let u = self.prepare(u)?;
        let c = u.coeffs();
        let mut acc = Complex64::new(0.0, 0.0);
        for (&t, &psi) in self.res.iter().zip(&self.res_psi) {
            let ix = self.table.indices(t as usize);
            let mut prod = c[ix[0] as usize];
            for j in 1..ix.len() {
                prod *= signed(c[ix[j] as usize], j);
            }
            acc += prod * psi;
        }
        Ok(acc)
    }

    /// `R_s(u) = 1/(2m) Re sum_{Omega != 0} (psi/Omega) prod u^iota`.
    pub fn correction(&self, u: &SpectralField) -> Result<f64> {
        let two_m = 2.0 * self.degree() as f64;
        Ok(self.correction_accumulator(u)?.re / two_m)
    }

    pub fn half_norm_sq(&self, u: &SpectralField) -> Result<f64> {
        let u = self.prepare(u)?;
        let n = sobolev_norm(&u, self.s, NormConvention::Equivalent)?;
        Ok(0.5 * n * n)
    }

    pub fn energy(&self, u: &SpectralField) -> Result<f64> {
        Ok(self.half_norm_sq(u)? + self.correction(u)?)
    }

    /// Derivative terms at a field given in the `u`-picture.
    pub fn derivative_terms_u(&self, u: &SpectralField, ws: &mut EnergyWorkspace) -> Result<DerivativeTerms> {
        let u = self.prepare(u)?;
        let two_m = 2.0 * self.degree() as f64;
        let term_i = -self.resonant_accumulator(&u)?.im / two_m;
        let nu = ws.kernel.apply(&u)?;
        let c = u.coeffs();
        let w = self.table.width();
        let mut fields = vec![c; w];
        fields[0] = nu.coeffs();
        let term_ii = 0.5 * self.nonresonant_form(&fields).im;
        fields[0] = c;
        fields[1] = nu.coeffs();
        let term_iii = -0.5 * self.nonresonant_form(&fields).im;
        Ok(DerivativeTerms { term_i, term_ii, term_iii })
    }

    /// `I + II + III` for the interaction variable `v` at time `t`.
    pub fn derivative_terms(&self, v: &SpectralField, t: f64, ws: &mut EnergyWorkspace) -> Result<DerivativeTerms> {
        self.derivative_terms_u(&linear_propagate(v, t), ws)
    }

    pub fn report(&self, u: &SpectralField, ws: &mut EnergyWorkspace) -> Result<EnergyReport> {
        let h = self.half_norm_sq(u)?;
        let r = self.correction(u)?;
        let d = self.derivative_terms_u(u, ws)?;
        Ok(EnergyReport {
            h_s_half_sq: h,
            r_s: r,
            e_s: h + r,
            term_i: d.term_i,
            term_ii: d.term_ii,
            term_iii: d.term_iii,
            q_n: d.total(),
        })
    }
}

/// `R_s` of `P_N u`.
pub fn correction_r_s(u: &SpectralField, s: f64, degree: u32, cutoff: u32) -> Result<f64> {
    EnergyModel::new(cutoff, degree, s)?.correction(u)
}

/// `E_s(P_N u)`.
pub fn modified_energy(u: &SpectralField, s: f64, degree: u32, cutoff: u32) -> Result<f64> {
    EnergyModel::new(cutoff, degree, s)?.energy(u)
}

/// Derivative terms of `t -> E_{s,t}(v(t))` at `(v, t)`.
pub fn derivative_terms(v: &SpectralField, t: f64, s: f64, degree: u32, cutoff: u32) -> Result<DerivativeTerms> {
    let model = EnergyModel::new(cutoff, degree, s)?;
    let mut ws = model.workspace()?;
    model.derivative_terms(v, t, &mut ws)
}

/// `Q_N(u) = d/dt E_s(u(t))` at `t = 0`.
pub fn q_n_at_zero(u: &SpectralField, s: f64, degree: u32, cutoff: u32) -> Result<f64> {
    Ok(derivative_terms(u, 0.0, s, degree, cutoff)?.total())
}

/// Cubic-case derivative terms by direct nested summation over the outer
/// 4-tuple and the inner triple of the substituted equation, with explicit
/// phases. Intended for very small cutoffs only.
pub fn literal_derivative_terms(
    v: &SpectralField,
    t: f64,
    s: f64,
    cutoff: u32,
    budget: f64,
) -> Result<DerivativeTerms> {
    let degree = 2u32;
    let v = v.with_cutoff(cutoff);
    let modes = v.ball().modes().to_vec();
    let nb = modes.len() as f64;
    let width = 2 * degree as usize;
    let requested = nb.powi(width as i32 - 1) * nb.powi(width as i32 - 2);
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let two_m = width as f64;
    let phase = |w: f64| Complex64::from_polar(1.0, -t * w);
    let mut term_i = 0.0;
    let mut term_ii = 0.0;
    let mut term_iii = 0.0;

    // Outer tuples by plain nested iteration.
    let mut outer = vec![Mode::ZERO; width];
    let mut stack = vec![0usize; width - 1];
    'outer: loop {
        for j in 0..width - 1 {
            outer[j] = modes[stack[j]];
        }
        let mut last = Mode::ZERO;
        for j in 0..width - 1 {
            last = last + outer[j].scaled(sign(j) as i32);
        }
        if v.ball().contains(last) {
            outer[width - 1] = last;
            let om = omega(&outer);
            let psi = psi2s(&outer, s);
            let coeff = |j: usize| signed(v.get(outer[j]), j);
            if om == 0 {
                let mut prod = phase(0.0);
                for j in 0..width {
                    prod *= coeff(j);
                }
                term_i += -(psi * prod).im / two_m;
            } else {
                let w = psi / om as f64;
                for slot in [0usize, 1] {
                    let target = outer[slot];
                    let inner = inner_sum(&v, &modes, target, t);
                    let mut prod = signed(inner, slot);
                    for j in 0..width {
                        if j != slot {
                            prod *= coeff(j);
                        }
                    }
                    let outer_phase = phase((om - sign(slot) * target.norm_sq()) as f64);
                    let term = w * prod * outer_phase;
                    if slot == 0 {
                        term_ii += 0.5 * term.im;
                    } else {
                        term_iii -= 0.5 * term.im;
                    }
                }
            }
        }
        // Advance the odometer.
        let mut j = width - 2;
        loop {
            stack[j] += 1;
            if stack[j] < modes.len() {
                break;
            }
            stack[j] = 0;
            if j == 0 {
                break 'outer;
            }
            j -= 1;
        }
    }
    Ok(DerivativeTerms { term_i, term_ii, term_iii })
}

/// `sum_{p_1 - p_2 + p_3 = k} e^{-it (|p_1|^2 - |p_2|^2 + |p_3|^2)} v_{p_1} conj(v_{p_2}) v_{p_3}`.
fn inner_sum(v: &SpectralField, modes: &[Mode], k: Mode, t: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &p1 in modes {
        for &p2 in modes {
            let p3 = k - p1 + p2;
            if !v.ball().contains(p3) {
                continue;
            }
            let w = (p1.norm_sq() - p2.norm_sq() + p3.norm_sq()) as f64;
            acc += Complex64::from_polar(1.0, -t * w) * v.get(p1) * v.get(p2).conj() * v.get(p3);
        }
    }
    acc
}
