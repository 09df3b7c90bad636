//! Fourier lattice, truncation balls and coefficient-space norms.
//!
//! A field is a finite family of coefficients `u_k`, `k` in the Euclidean
//! ball `|k| <= N`, standing for `u(x) = sum_k u_k e^{i k.x}` on `[0, 2pi]^2`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Area of the torus, `(2 pi)^2`.
pub const TORUS_AREA: f64 = 4.0 * PI * PI;

/// A frequency `k` in `Z^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub kx: i32,
    pub ky: i32,
}

impl Mode {
    pub const ZERO: Mode = Mode { kx: 0, ky: 0 };

    pub const fn new(kx: i32, ky: i32) -> Self {
        Mode { kx, ky }
    }

    /// Exact `|k|^2`.
    pub fn norm_sq(self) -> i64 {
        let (x, y) = (self.kx as i64, self.ky as i64);
        x * x + y * y
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `<k> = (1 + |k|^2)^{1/2}`.
    pub fn bracket(self) -> f64 {
        bracket(self)
    }

    pub fn scaled(self, sign: i32) -> Mode {
        Mode::new(sign * self.kx, sign * self.ky)
    }
}

impl Ord for Mode {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.kx, self.ky).cmp(&(other.kx, other.ky))
    }
}

impl PartialOrd for Mode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Mode {
    type Output = Mode;
    fn add(self, o: Mode) -> Mode {
        Mode::new(self.kx + o.kx, self.ky + o.ky)
    }
}

impl Sub for Mode {
    type Output = Mode;
    fn sub(self, o: Mode) -> Mode {
        Mode::new(self.kx - o.kx, self.ky - o.ky)
    }
}

impl Neg for Mode {
    type Output = Mode;
    fn neg(self) -> Mode {
        Mode::new(-self.kx, -self.ky)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.kx, self.ky)
    }
}

/// Japanese bracket `<k> = (1 + |k|^2)^{1/2}`.
pub fn bracket(k: Mode) -> f64 {
    (1.0 + k.norm_sq() as f64).sqrt()
}

/// Weight used by [`sobolev_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormConvention {
    /// `1 + |k|^{2s}`; the norm entering the modified energy.
    Equivalent,
    /// `<k>^{2s}`.
    Bracket,
}

impl NormConvention {
    pub fn weight(self, k: Mode, s: f64) -> f64 {
        let n2 = k.norm_sq() as f64;
        match self {
            NormConvention::Equivalent => 1.0 + n2.powf(s),
            NormConvention::Bracket => (1.0 + n2).powf(s),
        }
    }
}

/// The integer points of the closed disc `|k| <= N`, sorted by `(kx, ky)`.
#[derive(Debug, PartialEq, Eq)]
pub struct Ball {
    cutoff: u32,
    modes: Vec<Mode>,
    row_start: Vec<usize>,
    row_half: Vec<i32>,
}

impl Ball {
    pub fn new(cutoff: u32) -> Self {
        let n = cutoff as i64;
        let mut modes = Vec::new();
        let mut row_start = Vec::with_capacity(2 * cutoff as usize + 1);
        let mut row_half = Vec::with_capacity(2 * cutoff as usize + 1);
        for kx in -n..=n {
            let half = isqrt((n * n - kx * kx) as u64) as i64;
            row_start.push(modes.len());
            row_half.push(half as i32);
            for ky in -half..=half {
                modes.push(Mode::new(kx as i32, ky as i32));
            }
        }
        Ball { cutoff, modes, row_start, row_half }
    }

    pub fn shared(cutoff: u32) -> Arc<Ball> {
        Arc::new(Ball::new(cutoff))
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> Mode {
        self.modes[index]
    }

    pub fn contains(&self, k: Mode) -> bool {
        k.norm_sq() <= (self.cutoff as i64) * (self.cutoff as i64)
    }

    /// Position of `k` in [`Ball::modes`], if it lies in the ball.
    pub fn index_of(&self, k: Mode) -> Option<usize> {
        let n = self.cutoff as i64;
        let row = k.kx as i64 + n;
        if row < 0 || row > 2 * n {
            return None;
        }
        let half = self.row_half[row as usize];
        if k.ky.abs() > half {
            return None;
        }
        Some(self.row_start[row as usize] + (k.ky + half) as usize)
    }
}

pub(crate) fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Coefficients `u_k` on the ball `|k| <= N`.
#[derive(Clone, Debug)]
pub struct SpectralField {
    ball: Arc<Ball>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff() == other.cutoff() && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(cutoff: u32) -> Self {
        Self::zeros_on(Ball::shared(cutoff))
    }

    pub fn zeros_on(ball: Arc<Ball>) -> Self {
        let coeffs = vec![Complex64::new(0.0, 0.0); ball.len()];
        SpectralField { ball, coeffs }
    }

    /// Builds a field from dense coefficients ordered as [`Ball::modes`].
    pub fn from_dense(ball: Arc<Ball>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != ball.len() {
            return Err(invalid(
                "coeffs",
                format!("expected {} coefficients, found {}", ball.len(), coeffs.len()),
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(SpectralField { ball, coeffs })
    }

    /// Builds a field from sparse `(k, u_k)` pairs; later duplicates overwrite.
    pub fn from_modes<I>(cutoff: u32, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Mode, Complex64)>,
    {
        let mut field = Self::zeros(cutoff);
        for (k, c) in entries {
            field.set(k, c)?;
        }
        Ok(field)
    }

    pub fn cutoff(&self) -> u32 {
        self.ball.cutoff()
    }

    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// `u_k`, zero outside the ball.
    pub fn get(&self, k: Mode) -> Complex64 {
        self.ball
            .index_of(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set(&mut self, k: Mode, c: Complex64) -> Result<()> {
        if !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let i = self.ball.index_of(k).ok_or(Error::OutsideBall {
            kx: k.kx,
            ky: k.ky,
            cutoff: self.cutoff(),
        })?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, Complex64)> + '_ {
        self.ball.modes().iter().copied().zip(self.coeffs.iter().copied())
    }

    /// `sum_k |u_k|^2`.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, a: Complex64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// Pointwise `u_k <- f(k, u_k)`.
    pub fn map_modes(&self, mut f: impl FnMut(Mode, Complex64) -> Complex64) -> SpectralField {
        let coeffs = self.iter().map(|(k, c)| f(k, c)).collect();
        SpectralField { ball: self.ball.clone(), coeffs }
    }

    /// Re-expresses the field on the ball of radius `cutoff`, dropping or
    /// zero-padding modes as needed.
    pub fn with_cutoff(&self, cutoff: u32) -> SpectralField {
        if cutoff == self.cutoff() {
            return self.clone();
        }
        let ball = Ball::shared(cutoff);
        let coeffs = ball.modes().iter().map(|&k| self.get(k)).collect();
        SpectralField { ball, coeffs }
    }

    /// Largest `|u_k - v_k|` over the union of both supports.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        let big = if self.cutoff() >= other.cutoff() { self } else { other };
        big.ball
            .modes()
            .iter()
            .map(|&k| (self.get(k) - other.get(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Coefficient-wise `self + a * other` on the ball of `self`.
    pub fn add_scaled(&mut self, a: Complex64, other: &SpectralField) {
        if Arc::ptr_eq(&self.ball, &other.ball) || self.cutoff() == other.cutoff() {
            for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
                *x += a * y;
            }
        } else {
            for (i, &k) in self.ball.modes().iter().enumerate() {
                self.coeffs[i] += a * other.get(k);
            }
        }
    }
}

/// Coefficient-space Sobolev norm `(sum_k w_s(k) |u_k|^2)^{1/2}`.
pub fn sobolev_norm(u: &SpectralField, s: f64, convention: NormConvention) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("Sobolev index must be finite and >= 0, got {s}")));
    }
    Ok(u
        .iter()
        .map(|(k, c)| convention.weight(k, s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `M(u) = (2 pi)^2 sum_k |u_k|^2`.
pub fn mass(u: &SpectralField) -> f64 {
    TORUS_AREA * u.l2_sq()
}

/// Fourier projector onto `|k| <= cutoff`.
pub fn project(u: &SpectralField, cutoff: u32) -> SpectralField {
    u.with_cutoff(cutoff)
}
