//! Gauge-decomposed smoothing experiments and the first-Picard-iterate
//! counterexample built from a thin vertical slab plus two atoms.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{evolve_sampled, linear_propagate, FlowState, IntegratorSpec};
use crate::lattice::{mass, sobolev_norm, Mode, NormConvention, SpectralField};

/// Cap on the `support^3` triples visited by [`picard_iterate`].
pub const DEFAULT_PICARD_BUDGET: f64 = 5e8;

/// Phase rate `(1/2 pi^2) * mass(phi) = 2 sum |phi_k|^2` of the gauge transform.
pub fn gauge_rate(phi: &SpectralField) -> f64 {
    mass(phi) / (2.0 * std::f64::consts::PI * std::f64::consts::PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub times: Vec<f64>,
    /// `||w(t)||_{H^{s1}}` in the bracket convention.
    pub w_norms: Vec<f64>,
    pub gauge_phase_rate: f64,
    /// `||phi||_{H^{s1}}`, the scale the remainder is compared against.
    pub data_norm: f64,
    /// Largest change of any `w_norms` entry when the step is halved, if measured.
    pub integrator_error: Option<f64>,
}

impl SmoothingReport {
    pub fn max_w_norm(&self) -> f64 {
        self.w_norms.iter().copied().fold(0.0, f64::max)
    }
}

/// `w(t) = e^{i t gauge_rate(phi)} u(t) - e^{i t Delta} phi` along a trajectory
/// started from `phi`.
pub fn smoothing_remainder(phi: &SpectralField, trajectory: &[FlowState], s1: f64) -> Result<SmoothingReport> {
    smoothing_remainder_with_rate(phi, trajectory, s1, gauge_rate(phi))
}

/// As [`smoothing_remainder`] with an explicit gauge rate.
pub fn smoothing_remainder_with_rate(
    phi: &SpectralField,
    trajectory: &[FlowState],
    s1: f64,
    rate: f64,
) -> Result<SmoothingReport> {
    let first = trajectory.first().ok_or_else(|| Error::TrajectoryMismatch("empty trajectory".into()))?;
    if first.time != 0.0 {
        return Err(Error::TrajectoryMismatch(format!("trajectory starts at t = {}", first.time)));
    }
    if first.field.cutoff() != phi.cutoff() {
        return Err(Error::CutoffMismatch { expected: phi.cutoff(), found: first.field.cutoff() });
    }
    let gap = first.field.max_abs_diff(phi);
    if gap > 1e-12 * (1.0 + phi.l2_sq().sqrt()) {
        return Err(Error::TrajectoryMismatch(format!("initial snapshot differs from the data by {gap:e}")));
    }
    let mut times = Vec::with_capacity(trajectory.len());
    let mut w_norms = Vec::with_capacity(trajectory.len());
    for state in trajectory {
        let t = state.time;
        let mut w = state.field.clone();
        w.scale(Complex64::from_polar(1.0, t * rate));
        w.add_scaled(Complex64::new(-1.0, 0.0), &linear_propagate(phi, t));
        times.push(t);
        w_norms.push(sobolev_norm(&w, s1, NormConvention::Bracket)?);
    }
    Ok(SmoothingReport {
        times,
        w_norms,
        gauge_phase_rate: rate,
        data_norm: sobolev_norm(phi, s1, NormConvention::Bracket)?,
        integrator_error: None,
    })
}

/// Evolves `phi` to `t_final`, recording every `every` steps, and reports the
/// remainder together with the change observed when the step is halved.
pub fn smoothing_experiment(
    phi: &SpectralField,
    t_final: f64,
    s1: f64,
    spec: &IntegratorSpec,
    every: usize,
) -> Result<SmoothingReport> {
    let coarse = evolve_sampled(phi, t_final, spec, every)?;
    let mut report = smoothing_remainder(phi, &coarse, s1)?;
    let fine_spec = IntegratorSpec { dt: spec.dt / 2.0, ..*spec };
    let fine = evolve_sampled(phi, t_final, &fine_spec, 2 * every)?;
    let fine_report = smoothing_remainder(phi, &fine, s1)?;
    if fine_report.w_norms.len() == report.w_norms.len() {
        let err = report
            .w_norms
            .iter()
            .zip(&fine_report.w_norms)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report.integrator_error = Some(err);
    }
    Ok(report)
}

/// First Picard iterate of the Wick-ordered cubic Duhamel term, in the
/// interaction picture:
///
/// `sum_{k1-k2+k3=k, k2 != k1,k3} (2 sin(t Omega/2)/(i Omega)) e^{-i t Omega/2} phi_k1 conj(phi_k2) phi_k3
///  + i t |phi_k|^2 phi_k`,
///
/// where `Omega = |k1|^2 - |k2|^2 + |k3|^2 - |k|^2` and the `Omega = 0` summands
/// take the limit `t`. The output lives on the ball of radius `3N`.
pub fn picard_iterate(phi: &SpectralField, t: f64) -> Result<SpectralField> {
    picard_iterate_with_budget(phi, t, DEFAULT_PICARD_BUDGET)
}

pub fn picard_iterate_with_budget(phi: &SpectralField, t: f64, budget: f64) -> Result<SpectralField> {
    if !t.is_finite() {
        return Err(invalid("t", "time must be finite"));
    }
    let support: Vec<(Mode, Complex64)> = phi.iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect();
    let work = (support.len() as f64).powi(3);
    if work > budget {
        return Err(Error::BudgetExceeded { requested: work, budget });
    }
    let mut out = SpectralField::zeros(3 * phi.cutoff());
    let ball = out.ball().clone();
    let acc = out.coeffs_mut();
    let minus_i = Complex64::new(0.0, -1.0);
    for &(k1, c1) in &support {
        for &(k2, c2) in &support {
            if k2 == k1 {
                continue;
            }
            let c12 = c1 * c2.conj();
            for &(k3, c3) in &support {
                if k2 == k3 {
                    continue;
                }
                let k = k1 - k2 + k3;
                let omega = (k1.norm_sq() - k2.norm_sq() + k3.norm_sq() - k.norm_sq()) as f64;
                let factor = if omega == 0.0 { t } else { 2.0 * (t * omega / 2.0).sin() / omega };
                let idx = ball.index_of(k).expect("k1 - k2 + k3 lies in the tripled ball");
                acc[idx] += minus_i * factor * Complex64::from_polar(1.0, -t * omega / 2.0) * c12 * c3;
            }
        }
    }
    for &(k, c) in &support {
        let idx = ball.index_of(k).expect("support lies in the ball");
        acc[idx] += Complex64::new(0.0, t) * c.norm_sqr() * c;
    }
    Ok(out)
}

/// Slab `{(0, eta): n <= eta <= 2n}` with amplitude `n^{-sigma-1/2}` plus unit
/// atoms at `(1, 0)` and `(2, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleData {
    pub n: u32,
    pub sigma: f64,
}

impl CounterexampleData {
    pub fn new(n: u32, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "expected n >= 1"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma", format!("expected a finite sigma >= 0, got {sigma}")));
        }
        Ok(CounterexampleData { n, sigma })
    }

    pub fn amplitude(&self) -> f64 {
        (self.n as f64).powf(-self.sigma - 0.5)
    }

    pub fn field(&self) -> SpectralField {
        let a = Complex64::new(self.amplitude(), 0.0);
        let slab = (self.n..=2 * self.n).map(|eta| (Mode::new(0, eta as i32), a));
        let atoms = [(Mode::new(1, 0), Complex64::new(1.0, 0.0)), (Mode::new(2, 0), Complex64::new(1.0, 0.0))];
        SpectralField::from_modes(2 * self.n, slab.chain(atoms)).expect("finite data inside the ball")
    }

    /// Targets `(1, eta)`, `n <= eta <= 2n`, fed by the two principal triples.
    pub fn slab_targets(&self) -> impl Iterator<Item = Mode> {
        (self.n..=2 * self.n).map(|eta| Mode::new(1, eta as i32))
    }
}

/// `H^{sigma1}` norm (bracket convention) of `u` restricted to the slab targets.
pub fn slab_block_norm(u: &SpectralField, data: &CounterexampleData, sigma1: f64) -> f64 {
    data.slab_targets()
        .map(|k| k.bracket().powf(2.0 * sigma1) * u.get(k).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleNorms {
    pub n: u32,
    pub data_norm: f64,
    pub iterate_norm: f64,
    pub slab_block_norm: f64,
}

/// Norms of the counterexample data and of its first Picard iterate at time `t`.
pub fn counterexample_norms(sigma: f64, sigma1: f64, t: f64, n: u32) -> Result<CounterexampleNorms> {
    let data = CounterexampleData::new(n, sigma)?;
    let phi = data.field();
    let it = picard_iterate(&phi, t)?;
    Ok(CounterexampleNorms {
        n,
        data_norm: sobolev_norm(&phi, sigma, NormConvention::Bracket)?,
        iterate_norm: sobolev_norm(&it, sigma1, NormConvention::Bracket)?,
        slab_block_norm: slab_block_norm(&it, &data, sigma1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScan {
    pub sigma: f64,
    pub sigma1: f64,
    pub t: f64,
    pub rows: Vec<CounterexampleNorms>,
    /// Least-squares slope of `log ||iterate||_{H^{sigma1}}` against `log n`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Fits the growth of the iterate norm in `n`; the expected slope is `sigma1 - sigma`.
pub fn divergence_scan(sigma: f64, sigma1: f64, t: f64, n_list: &[u32]) -> Result<DivergenceScan> {
    if n_list.len() < 3 {
        return Err(invalid("n_list", format!("need at least 3 values of n, got {}", n_list.len())));
    }
    if sigma1 < sigma {
        return Err(invalid("sigma1", format!("expected sigma1 >= sigma, got {sigma1} < {sigma}")));
    }
    if (t / std::f64::consts::PI).fract().abs() < 1e-12 || (t / std::f64::consts::PI).fract().abs() > 1.0 - 1e-12 {
        return Err(invalid("t", format!("t = {t} lies in the exceptional set pi Z")));
    }
    let rows: Vec<CounterexampleNorms> = n_list
        .par_iter()
        .map(|&n| counterexample_norms(sigma, sigma1, t, n))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.iterate_norm.ln()).collect();
    let (slope, intercept, residual) = least_squares(&xs, &ys);
    Ok(DivergenceScan { sigma, sigma1, t, rows, slope, intercept, residual })
}

/// Ordinary least-squares line `y = slope x + intercept` and its RMS residual.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_rate_of_single_mode_is_two() {
        let u = SpectralField::from_modes(2, [(Mode::new(1, 1), Complex64::new(0.6, 0.8))]).unwrap();
        assert!((gauge_rate(&u) - 2.0).abs() < 1e-14);
        assert_eq!(gauge_rate(&SpectralField::zeros(3)), 0.0);
    }

    #[test]
    fn iterate_vanishes_at_time_zero() {
        let phi = CounterexampleData::new(4, 0.5).unwrap().field();
        let it = picard_iterate(&phi, 0.0).unwrap();
        assert_eq!(it.l2_sq(), 0.0);
    }

    #[test]
    fn fit_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = xs.map(|x| 0.5 * x - 1.0);
        let (a, b, r) = least_squares(&xs, &ys);
        assert!((a - 0.5).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
