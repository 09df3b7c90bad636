//! Physical-space grids and the FFT route to polynomial nonlinearities.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, SpectralField, TORUS_AREA};

/// Uniform `G x G` grid on the torus used to evaluate a degree-`2m` quantity
/// of a field truncated at `cutoff` without aliasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub cutoff: u32,
    pub degree: u32,
    pub points: usize,
}

impl GridSpec {
    /// Smallest grid resolving `|u|^{2m}` exactly: `G = 2 m N + 1`.
    pub fn minimal(cutoff: u32, degree: u32) -> Self {
        GridSpec { cutoff, degree, points: required_points(cutoff, degree) }
    }

    pub fn new(cutoff: u32, degree: u32, points: usize) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("degree", "m must be at least 1"));
        }
        let required = required_points(cutoff, degree);
        if points < required {
            return Err(Error::GridTooSmall { points, required });
        }
        Ok(GridSpec { cutoff, degree, points })
    }
}

fn required_points(cutoff: u32, degree: u32) -> usize {
    2 * degree as usize * cutoff as usize + 1
}

/// A square FFT grid with cached plans and scratch space.
pub struct Grid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Clone for Grid {
    fn clone(&self) -> Self {
        Grid {
            n: self.n,
            fwd: self.fwd.clone(),
            inv: self.inv.clone(),
            scratch: self.scratch.clone(),
        }
    }
}

impl Grid {
    pub fn new(points: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(points);
        let inv = planner.plan_fft_inverse(points);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Grid { n: points, fwd, inv, scratch: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn points(&self) -> usize {
        self.n
    }

    fn slot(&self, kx: i32, ky: i32) -> usize {
        let n = self.n as i64;
        let ix = (kx as i64).rem_euclid(n) as usize;
        let iy = (ky as i64).rem_euclid(n) as usize;
        ix * self.n + iy
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { self.fwd.clone() } else { self.inv.clone() };
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
    }

    /// Values `u(x_ij) = sum_k u_k e^{i k.x_ij}` at `x_ij = 2 pi (i, j) / G`,
    /// stored row-major in `i`.
    pub fn synthesize(&mut self, u: &SpectralField) -> Result<Vec<Complex64>> {
        let required = 2 * u.cutoff() as usize + 1;
        if self.n < required {
            return Err(Error::GridTooSmall { points: self.n, required });
        }
        let mut data = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        for (k, c) in u.iter() {
            let s = self.slot(k.kx, k.ky);
            data[s] = c;
        }
        self.transform(&mut data, false);
        Ok(data)
    }

    /// Fourier coefficients of grid values, restricted to `ball`.
    pub fn analyze(&mut self, mut data: Vec<Complex64>, ball: Arc<Ball>) -> Result<SpectralField> {
        let required = 2 * ball.cutoff() as usize + 1;
        if self.n < required {
            return Err(Error::GridTooSmall { points: self.n, required });
        }
        self.transform(&mut data, true);
        let norm = 1.0 / (self.n * self.n) as f64;
        let coeffs = ball
            .modes()
            .iter()
            .map(|k| data[self.slot(k.kx, k.ky)] * norm)
            .collect();
        SpectralField::from_dense(ball, coeffs)
    }

    /// Grid mean of `f(u(x))`.
    pub fn mean_of(&mut self, u: &SpectralField, f: impl Fn(Complex64) -> f64) -> Result<f64> {
        let values = self.synthesize(u)?;
        Ok(values.iter().map(|&z| f(z)).sum::<f64>() / values.len() as f64)
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Evaluates `P(|u|^{2m-2} u)` for a fixed input cutoff, output ball and grid.
pub struct PowerKernel {
    grid: Grid,
    degree: u32,
    in_cutoff: u32,
    out_ball: Arc<Ball>,
}

impl Clone for PowerKernel {
    fn clone(&self) -> Self {
        PowerKernel {
            grid: self.grid.clone(),
            degree: self.degree,
            in_cutoff: self.in_cutoff,
            out_ball: self.out_ball.clone(),
        }
    }
}

impl PowerKernel {
    /// A grid with `G >= (2m-1) N_in + N_out + 1` points gives the exact
    /// projection; `points = None` picks that minimum.
    pub fn new(in_cutoff: u32, degree: u32, out_cutoff: u32, points: Option<usize>) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("degree", "m must be at least 1"));
        }
        let required = ((2 * degree - 1) * in_cutoff + out_cutoff) as usize + 1;
        let required = required.max(2 * in_cutoff.max(out_cutoff) as usize + 1);
        let points = points.unwrap_or(required);
        if points < required {
            return Err(Error::GridTooSmall { points, required });
        }
        Ok(PowerKernel {
            grid: Grid::new(points),
            degree,
            in_cutoff,
            out_ball: Ball::shared(out_cutoff),
        })
    }

    /// Kernel projecting back onto the input ball, on the minimal grid `2mN+1`.
    pub fn projected(cutoff: u32, degree: u32) -> Result<Self> {
        Self::new(cutoff, degree, cutoff, None)
    }

    pub fn out_ball(&self) -> &Arc<Ball> {
        &self.out_ball
    }

    pub fn apply(&mut self, u: &SpectralField) -> Result<SpectralField> {
        if u.cutoff() != self.in_cutoff {
            return Err(Error::CutoffMismatch { expected: self.in_cutoff, found: u.cutoff() });
        }
        let mut values = self.grid.synthesize(u)?;
        let p = (self.degree - 1) as i32;
        for z in &mut values {
            *z *= z.norm_sqr().powi(p);
        }
        self.grid.analyze(values, self.out_ball.clone())
    }

    /// Pointwise `u <- e^{-i dt |u|^{2m-2}} u` followed by projection onto the
    /// output ball.
    pub fn rotate(&mut self, u: &SpectralField, dt: f64) -> Result<SpectralField> {
        if u.cutoff() != self.in_cutoff {
            return Err(Error::CutoffMismatch { expected: self.in_cutoff, found: u.cutoff() });
        }
        let mut values = self.grid.synthesize(u)?;
        let p = (self.degree - 1) as i32;
        for z in &mut values {
            let phase = -dt * z.norm_sqr().powi(p);
            *z *= Complex64::from_polar(1.0, phase);
        }
        self.grid.analyze(values, self.out_ball.clone())
    }
}

/// `|u|^{2m-2} u` with its full spectrum, supported in `|k| <= (2m-1) N`.
pub fn power_nonlinearity(u: &SpectralField, degree: u32) -> Result<SpectralField> {
    if degree == 0 {
        return Err(invalid("degree", "m must be at least 1"));
    }
    let out = (2 * degree - 1) * u.cutoff();
    PowerKernel::new(u.cutoff(), degree, out, None)?.apply(u)
}

/// `H(u) = 1/2 (2pi)^2 sum |k|^2 |u_k|^2 + 1/(2m) int |u|^{2m}`, with the
/// integral computed by exact quadrature on the grid `spec`.
pub fn hamiltonian_on(u: &SpectralField, spec: GridSpec) -> Result<f64> {
    let spec = GridSpec::new(u.cutoff().max(spec.cutoff), spec.degree, spec.points)?;
    let kinetic: f64 = u.iter().map(|(k, c)| k.norm_sq() as f64 * c.norm_sqr()).sum();
    let m = spec.degree as i32;
    let mean = Grid::new(spec.points).mean_of(u, |z| z.norm_sqr().powi(m))?;
    Ok(0.5 * TORUS_AREA * kinetic + TORUS_AREA * mean / (2.0 * m as f64))
}

/// [`hamiltonian_on`] with the minimal grid.
pub fn hamiltonian(u: &SpectralField, degree: u32) -> Result<f64> {
    if degree == 0 {
        return Err(invalid("degree", "m must be at least 1"));
    }
    hamiltonian_on(u, GridSpec::minimal(u.cutoff(), degree))
}

/// Wick-ordered cubic term `|v|^2 v - 2 (sum_j |v_j|^2) v`, full spectrum.
pub fn renormalized_cubic(v: &SpectralField) -> Result<SpectralField> {
    let mut w = power_nonlinearity(v, 2)?;
    let shift = -2.0 * v.l2_sq();
    w.add_scaled(Complex64::new(shift, 0.0), v);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Mode;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn synthesize_then_analyze_is_identity() {
        let u = SpectralField::from_modes(
            3,
            [(Mode::new(1, -2), c(0.5, 1.0)), (Mode::new(-3, 0), c(-2.0, 0.25)), (Mode::ZERO, c(1.0, 0.0))],
        )
        .unwrap();
        let mut g = Grid::new(11);
        let vals = g.synthesize(&u).unwrap();
        let back = g.analyze(vals, u.ball().clone()).unwrap();
        assert!(back.max_abs_diff(&u) < 1e-14);
    }

    #[test]
    fn too_small_grid_is_rejected() {
        assert!(matches!(GridSpec::new(4, 2, 16), Err(Error::GridTooSmall { required: 17, .. })));
        assert!(GridSpec::new(4, 2, 17).is_ok());
    }

    #[test]
    fn single_mode_hamiltonian_closed_form() {
        // |u|^4 is constant for a single mode.
        let a = 0.7;
        let u = SpectralField::from_modes(2, [(Mode::new(1, 1), c(a, 0.0))]).unwrap();
        let h = hamiltonian(&u, 2).unwrap();
        let expect = 0.5 * TORUS_AREA * 2.0 * a * a + TORUS_AREA * a.powi(4) / 4.0;
        assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_independent_of_admissible_grid() {
        let u = SpectralField::from_modes(
            2,
            [(Mode::new(1, 0), c(0.3, 0.1)), (Mode::new(0, -2), c(-0.2, 0.4)), (Mode::new(-1, 1), c(0.1, 0.0))],
        )
        .unwrap();
        let h1 = hamiltonian_on(&u, GridSpec::new(2, 2, 9).unwrap()).unwrap();
        let h2 = hamiltonian_on(&u, GridSpec::new(2, 2, 24).unwrap()).unwrap();
        assert!((h1 - h2).abs() < 1e-12 * h1.abs());
    }
}
