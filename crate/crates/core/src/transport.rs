//! Monte Carlo moments of the energy-cutoff weighted measure and the scalar
//! bounds that turn a differential inequality for transported sets into a
//! weak-`L^q` bound on the transported density.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, DEFAULT_TUPLE_BUDGET};
use crate::ensemble::{lp_norm_from_values, sample_mu_s, EnsembleSpec, MCEstimate};
use crate::error::{invalid, Error, Result};
use crate::grid::hamiltonian;
use crate::lattice::{SpectralField, TORUS_AREA};

/// How `H_N[u] <= lambda` is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyCutoff {
    /// `H_N / (2 pi)^2`: the energy per unit area.
    #[default]
    PerVolume,
    /// `H_N` with the integral over the torus.
    Integral,
}

impl EnergyCutoff {
    pub fn accepts(self, h: f64, lambda: f64) -> bool {
        match self {
            EnergyCutoff::PerVolume => h / TORUS_AREA <= lambda,
            EnergyCutoff::Integral => h <= lambda,
        }
    }
}

/// Settings shared by the cutoff moment experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSettings {
    pub lambda: f64,
    pub degree: u32,
    pub cutoff: EnergyCutoff,
}

impl CutoffSettings {
    pub fn new(lambda: f64, degree: u32) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(invalid("lambda", format!("expected lambda >= 1, got {lambda}")));
        }
        Ok(CutoffSettings { lambda, degree, cutoff: EnergyCutoff::default() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffMoment {
    pub estimate: MCEstimate,
    /// Fraction of samples with `H_N <= lambda`.
    pub acceptance: f64,
}

/// Values `1_{H_N <= lambda} F(u)` over the ensemble. `make` builds one
/// per-worker state; results do not depend on the number of workers.
pub fn cutoff_values<S, I, F>(spec: &EnsembleSpec, settings: &CutoffSettings, make: I, f: F) -> Result<(Vec<f64>, usize)>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &SpectralField) -> Result<f64> + Sync + Send,
{
    spec.validate()?;
    let rows: Vec<Result<Option<f64>>> = (0..spec.sample_count)
        .into_par_iter()
        .map_init(&make, |state, i| {
            let u = sample_mu_s(spec, i)?;
            let h = hamiltonian(&u, settings.degree)?;
            if !settings.cutoff.accepts(h, settings.lambda) {
                return Ok(None);
            }
            let v = f(state, &u)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteSample { index: i });
            }
            Ok(Some(v))
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len());
    let mut accepted = 0;
    for r in rows {
        match r? {
            Some(v) => {
                accepted += 1;
                values.push(v);
            }
            None => values.push(0.0),
        }
    }
    if accepted == 0 {
        return Err(Error::NoAcceptedSamples { count: spec.sample_count });
    }
    Ok((values, accepted))
}

fn moment_from(values: &[f64], accepted: usize, p: f64) -> Result<CutoffMoment> {
    Ok(CutoffMoment { estimate: lp_norm_from_values(values, p)?, acceptance: accepted as f64 / values.len() as f64 })
}

fn correction_model(s: f64, spec: &EnsembleSpec, degree: u32) -> Result<EnergyModel> {
    if !(s > 2.0) {
        return Err(invalid("s", format!("expected s > 2, got {s}")));
    }
    if spec.s != s {
        return Err(invalid("spec", format!("ensemble regularity {} differs from s = {s}", spec.s)));
    }
    EnergyModel::with_budget(spec.cutoff, degree, s, DEFAULT_TUPLE_BUDGET)
}

/// `|| 1_{H_N <= lambda} e^{|R_{s,N}(u)|} ||_{L^p(mu_s)}` on samples of `pi_N phi`.
pub fn weighted_density_moments(s: f64, settings: &CutoffSettings, p: f64, spec: &EnsembleSpec) -> Result<CutoffMoment> {
    let model = correction_model(s, spec, settings.degree)?;
    let (values, accepted) = cutoff_values(spec, settings, || (), |_, u| Ok(model.correction(u)?.abs().exp()))?;
    moment_from(&values, accepted, p)
}

/// Like [`weighted_density_moments`] for several `p` from one set of samples.
pub fn weighted_density_scan(s: f64, settings: &CutoffSettings, p_values: &[f64], spec: &EnsembleSpec) -> Result<Vec<CutoffMoment>> {
    let model = correction_model(s, spec, settings.degree)?;
    let (values, accepted) = cutoff_values(spec, settings, || (), |_, u| Ok(model.correction(u)?.abs().exp()))?;
    p_values.iter().map(|&p| moment_from(&values, accepted, p)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentScan {
    pub p_values: Vec<f64>,
    pub estimates: Vec<MCEstimate>,
    /// Slope of `log ||.||_{L^p}` against `log p`.
    pub fitted_beta: f64,
    /// Half-width of the 95% interval for the slope, from the per-point stderrs.
    pub beta_ci: f64,
    pub acceptance: f64,
}

fn check_p_values(p_values: &[f64]) -> Result<()> {
    if p_values.len() < 2 {
        return Err(invalid("p_values", "need at least two exponents"));
    }
    if p_values[0] < 2.0 || p_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("p_values", "exponents must be strictly increasing and >= 2"));
    }
    Ok(())
}

/// Least-squares slope of `log mean` on `log p` with a 95% half-width from
/// propagating each point's relative standard error.
pub fn fit_beta(p_values: &[f64], estimates: &[MCEstimate]) -> Result<(f64, f64)> {
    if estimates.iter().any(|e| !(e.mean > 0.0)) {
        return Err(invalid("estimates", "log-fit needs positive estimates"));
    }
    let xs: Vec<f64> = p_values.iter().map(|p| p.ln()).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.mean.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let beta = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let var: f64 = xs
        .iter()
        .zip(estimates)
        .map(|(x, e)| ((x - mx) / sxx).powi(2) * (e.stderr / e.mean).powi(2))
        .sum();
    Ok((beta, 1.96 * var.sqrt()))
}

/// Cutoff `L^p` norms of an arbitrary functional over one sample set, with the fitted growth exponent.
pub fn functional_moment_scan<S, I, F>(
    p_values: &[f64],
    settings: &CutoffSettings,
    spec: &EnsembleSpec,
    make: I,
    f: F,
) -> Result<MomentScan>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &SpectralField) -> Result<f64> + Sync + Send,
{
    check_p_values(p_values)?;
    let (values, accepted) = cutoff_values(spec, settings, make, f)?;
    let estimates: Vec<MCEstimate> = p_values.iter().map(|&p| lp_norm_from_values(&values, p)).collect::<Result<_>>()?;
    let (fitted_beta, beta_ci) = fit_beta(p_values, &estimates)?;
    Ok(MomentScan {
        p_values: p_values.to_vec(),
        estimates,
        fitted_beta,
        beta_ci,
        acceptance: accepted as f64 / values.len() as f64,
    })
}

/// `|| 1_{H_N <= lambda} Q_N ||_{L^p(mu_s)}` with `Q_N = d/dt E_{s,t}` at `t = 0`.
pub fn qn_moment_scan(s: f64, settings: &CutoffSettings, p_values: &[f64], spec: &EnsembleSpec) -> Result<MomentScan> {
    let model = correction_model(s, spec, settings.degree)?;
    functional_moment_scan(
        p_values,
        settings,
        spec,
        || model.workspace(),
        |ws, u| {
            let ws = ws.as_mut().map_err(|e| invalid("workspace", e.to_string()))?;
            Ok(model.derivative_terms_u(u, ws)?.total())
        },
    )
}

/// Constants of the abstract transport lemma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBoundParams {
    pub c0: f64,
    pub alpha: f64,
    /// `M_{2q}`, the bound on the change-of-weight densities.
    pub m_p: f64,
    pub t: f64,
    pub q: f64,
    /// Lower floor for the split point `b0`.
    pub b0: f64,
}

impl DensityBoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0) {
            return Err(invalid("C0", format!("expected C0 > 0, got {}", self.c0)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("expected alpha in (0, 1), got {}", self.alpha)));
        }
        if !(self.m_p > 0.0) || !self.m_p.is_finite() {
            return Err(invalid("M_p", format!("expected M_p > 0, got {}", self.m_p)));
        }
        if !(self.t >= 1.0) || !self.t.is_finite() {
            return Err(invalid("T", format!("expected T >= 1, got {}", self.t)));
        }
        if !(self.q > 1.0) || !self.q.is_finite() {
            return Err(invalid("q", format!("expected q > 1, got {}", self.q)));
        }
        if !(self.b0 > 0.0) || !self.b0.is_finite() {
            return Err(invalid("b0", format!("expected b0 > 0, got {}", self.b0)));
        }
        Ok(())
    }

    /// `M = max(C0, M_{2q})`.
    pub fn m(&self) -> f64 {
        self.c0.max(self.m_p)
    }
}

/// `(y0^{1/r} + C0 |t| r^{-alpha})^r`, the solution of `y' = C0 r^{1-alpha} y^{1-1/r}`.
pub fn gronwall_envelope(y0: f64, params: &DensityBoundParams, r: f64, t: f64) -> Result<f64> {
    if !(r > 1.0) {
        return Err(invalid("r", format!("expected r > 1, got {r}")));
    }
    if !(y0 >= 0.0) {
        return Err(invalid("y0", format!("expected y0 >= 0, got {y0}")));
    }
    Ok((y0.powf(1.0 / r) + params.c0 * t.abs() * r.powf(-params.alpha)).powf(r))
}

/// `log b / (log log b)^{1-alpha} <= b^{alpha/2}`.
fn first_condition(b: f64, alpha: f64) -> bool {
    let ll = b.ln().ln();
    ll > 0.0 && b.ln() / ll.powf(1.0 - alpha) <= b.powf(alpha / 2.0)
}

/// Smallest `b >= params.b0` satisfying the three conditions on the split
/// point, with the first one holding from there on.
pub fn split_point(params: &DensityBoundParams) -> Result<f64> {
    params.validate()?;
    let (alpha, q, t) = (params.alpha, params.q, params.t);
    let mut lo = params.b0.max((t / (4.0 * q)).powf(2.0 / alpha)).max((params.m().ln() / (4.0 * q)).exp().exp());
    if !lo.is_finite() {
        return Err(Error::NotConverged(format!("split point overflows for {params:?}")));
    }
    // Walk up in log b to the last failure of the first condition.
    let top = 700.0f64;
    let step = 1e-3;
    let mut last_fail = None;
    let mut x = lo.ln().max(1.0);
    while x <= top {
        if !first_condition(x.exp(), alpha) {
            last_fail = Some(x);
        }
        x += step;
    }
    if let Some(xf) = last_fail {
        if xf + step > top {
            return Err(Error::NotConverged(format!("first split condition fails up to b = e^{top}")));
        }
        // Bisect between the last failure and the next grid point.
        let (mut a, mut b) = (xf, xf + step);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if first_condition(mid.exp(), alpha) {
                b = mid;
            } else {
                a = mid;
            }
        }
        lo = lo.max(b.exp());
    }
    Ok(lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLqReport {
    pub value: f64,
    pub b0: f64,
    /// `sup_{b >= b0} exp(r log M - b/(2q) + T r^{1-alpha} (log b)^{1-1/(2q)})` with `r = b / log log b`.
    pub small_sets: f64,
    pub small_sets_argmax: f64,
    /// `sup_{e^{-b0} <= x <= 1} x^{-(1-1/q)} gronwall_envelope(M x^{1-1/(2q)}, r = 2, T)`.
    pub large_sets: f64,
}

fn small_set_exponent(b: f64, p: &DensityBoundParams) -> f64 {
    let ll = b.ln().ln();
    let r = b / ll;
    r * p.m().ln() - b / (2.0 * p.q) + p.t * r.powf(1.0 - p.alpha) * b.ln().powf(1.0 - 1.0 / (2.0 * p.q))
}

/// Maximizes `f` over `[lo, hi]` on a grid of `n` points followed by a
/// golden-section refinement; returns the argmax and the value.
fn maximize(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> (f64, f64, bool) {
    let h = (hi - lo) / n as f64;
    let mut best = (lo, f(lo));
    let mut at_end = false;
    for i in 1..=n {
        let x = lo + h * i as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            at_end = i == n;
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    if v > best.1 {
        best = (x, v);
    }
    (best.0, best.1, at_end)
}

/// Both branches of the split supremum and their maximum.
pub fn weak_lq_report(params: &DensityBoundParams) -> Result<WeakLqReport> {
    let b0 = split_point(params)?;
    let (lo, hi) = (b0.ln(), 700.0f64);
    if lo >= hi {
        return Err(Error::NotConverged(format!("split point b0 = {b0:e} exceeds the scan range")));
    }
    let (xb, exponent, at_end) = maximize(lo, hi, 200_000, |x| small_set_exponent(x.exp(), params));
    if at_end {
        return Err(Error::NotConverged(format!(
            "small-set exponent still increasing at b = e^{hi} (scan over [{b0:e}, e^{hi}])"
        )));
    }
    let a = 1.0 - 1.0 / (2.0 * params.q);
    let expo = 1.0 - 1.0 / params.q;
    let large = |lx: f64| {
        let x = lx.exp();
        let env = gronwall_envelope(params.m_p * x.powf(a), params, 2.0, params.t).expect("r = 2");
        (-expo * lx).exp() * env
    };
    let (_, large_sets, _) = maximize(-b0, 0.0, 20_000, large);
    let small_sets = exponent.exp();
    Ok(WeakLqReport { value: small_sets.max(large_sets), b0, small_sets, small_sets_argmax: xb.exp(), large_sets })
}

/// Weak-`L^q` constant for the transported density.
pub fn weak_lq_bound(params: &DensityBoundParams) -> Result<f64> {
    Ok(weak_lq_report(params)?.value)
}

/// `C rho_A^{1-eps0}` with `C` the weak-`L^q` constant at `q = 1/eps0`.
pub fn transported_set_bound(rho_a: f64, params: &DensityBoundParams, eps0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho_a) {
        return Err(invalid("rho_A", format!("expected a measure in [0, 1], got {rho_a}")));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(invalid("eps0", format!("expected eps0 in (0, 1), got {eps0}")));
    }
    let c = weak_lq_bound(&DensityBoundParams { q: 1.0 / eps0, ..*params })?;
    Ok(c * rho_a.powf(1.0 - eps0))
}
