//! Gaussian measures `mu_s` truncated to a ball and Monte Carlo estimators.
//!
//! Every Gaussian coefficient is drawn from its own ChaCha stream keyed by
//! `(seed, sample index, kx, ky)`, so a sample does not depend on how many
//! samples precede it or on how work is split across threads.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{bracket, Ball, Mode, SpectralField};

/// `E |g_k|^2` for the complex Gaussians.
pub const GAUSSIAN_SECOND_MOMENT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub s: f64,
    pub cutoff: u32,
    pub sample_count: usize,
    pub base_seed: u64,
}

impl EnsembleSpec {
    pub fn new(s: f64, cutoff: u32, sample_count: usize, base_seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { s, cutoff, sample_count, base_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(invalid("s", format!("the ensemble needs s > 1, got {}", self.s)));
        }
        if self.sample_count == 0 {
            return Err(invalid("sample_count", "at least one sample is required"));
        }
        Ok(())
    }

    pub fn with_count(&self, sample_count: usize) -> Self {
        EnsembleSpec { sample_count, ..self.clone() }
    }
}

/// Standard complex Gaussian `g` with `E|g|^2 = 1` for one `(sample, mode)` key.
pub fn gaussian_coefficient(seed: u64, index: u64, k: Mode) -> Complex64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..20].copy_from_slice(&k.kx.to_le_bytes());
    key[20..24].copy_from_slice(&k.ky.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let re: f64 = StandardNormal.sample(&mut rng);
    let im: f64 = StandardNormal.sample(&mut rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The raw Gaussians `g_k`, `|k| <= N`, of sample `index`.
pub fn sample_gaussians(spec: &EnsembleSpec, index: usize) -> Result<SpectralField> {
    spec.validate()?;
    if index >= spec.sample_count {
        return Err(Error::IndexOutOfRange { index, count: spec.sample_count });
    }
    let ball = Ball::shared(spec.cutoff);
    let coeffs = ball
        .modes()
        .iter()
        .map(|&k| gaussian_coefficient(spec.base_seed, index as u64, k))
        .collect();
    SpectralField::from_dense(ball, coeffs)
}

/// Sample `index` of `mu_s`: coefficients `g_k <k>^{-s}`.
pub fn sample_mu_s(spec: &EnsembleSpec, index: usize) -> Result<SpectralField> {
    let g = sample_gaussians(spec, index)?;
    let s = spec.s;
    Ok(g.map_modes(|k, c| c * bracket(k).powf(-s)))
}

/// Monte Carlo mean with its standard error `sd / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MCEstimate {
    /// Mean and standard error of finite values, with pairwise summation in
    /// index order.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "no samples"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let n = values.len() as f64;
        let mean = pairwise_sum(values) / n;
        let stderr = if values.len() > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Ok(MCEstimate { mean, stderr, count: values.len() })
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `F(u_i)` for every sample `i`, in index order.
pub fn mc_values<F>(spec: &EnsembleSpec, f: F) -> Result<Vec<f64>>
where
    F: Fn(&SpectralField) -> f64 + Sync,
{
    spec.validate()?;
    (0..spec.sample_count)
        .into_par_iter()
        .map(|i| sample_mu_s(spec, i).map(|u| f(&u)))
        .collect()
}

/// Monte Carlo estimate of `E_{mu_s}[F]`.
pub fn mc_expectation<F>(f: F, spec: &EnsembleSpec) -> Result<MCEstimate>
where
    F: Fn(&SpectralField) -> f64 + Sync,
{
    MCEstimate::from_values(&mc_values(spec, f)?)
}

/// `(E|F|^p)^{1/p}` from precomputed values, with a delta-method error.
pub fn lp_norm_from_values(values: &[f64], p: f64) -> Result<MCEstimate> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("need 1 <= p < inf, got {p}")));
    }
    let powers: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    let moment = MCEstimate::from_values(&powers)?;
    if moment.mean == 0.0 {
        return Ok(MCEstimate { mean: 0.0, stderr: 0.0, count: moment.count });
    }
    let mean = moment.mean.powf(1.0 / p);
    let stderr = mean / (p * moment.mean) * moment.stderr;
    Ok(MCEstimate { mean, stderr, count: moment.count })
}

/// Monte Carlo estimate of `||F||_{L^p(mu_s)}`.
pub fn mc_lp_norm<F>(f: F, p: f64, spec: &EnsembleSpec) -> Result<MCEstimate>
where
    F: Fn(&SpectralField) -> f64 + Sync,
{
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("need 1 <= p < inf, got {p}")));
    }
    lp_norm_from_values(&mc_values(spec, f)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible_and_keyed() {
        let spec = EnsembleSpec::new(2.0, 3, 10, 42).unwrap();
        let a = sample_mu_s(&spec, 4).unwrap();
        let b = sample_mu_s(&spec.with_count(100), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_mu_s(&spec, 5).unwrap());
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let spec = EnsembleSpec::new(2.0, 3, 10, 42).unwrap();
        assert!(matches!(sample_mu_s(&spec, 10), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn small_s_is_rejected() {
        assert!(EnsembleSpec::new(1.0, 3, 10, 0).is_err());
    }

    #[test]
    fn lp_of_constant_is_constant() {
        let est = lp_norm_from_values(&[2.0; 50], 3.0).unwrap();
        assert!((est.mean - 2.0).abs() < 1e-14);
        assert_eq!(est.stderr, 0.0);
        assert!(lp_norm_from_values(&[1.0], 0.5).is_err());
    }

    #[test]
    fn non_finite_sample_is_flagged_with_index() {
        let err = MCEstimate::from_values(&[1.0, 2.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { index: 2 }));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
