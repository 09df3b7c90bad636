//! Truncated flow `i d_t u + Delta u = P_N(|u|^{2m-2} u)` on the ball.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{hamiltonian, PowerKernel};
use crate::lattice::{mass, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Second-order splitting: half linear steps around a pointwise phase
    /// rotation, projected back onto the ball.
    StrangSplit,
    /// Classical RK4 on the interaction variable `v = e^{-it Delta} u`.
    RK4Interaction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub cutoff: u32,
    pub degree: u32,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, cutoff: u32, degree: u32) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("time step must be positive, got {dt}")));
        }
        if degree == 0 {
            return Err(invalid("degree", "m must be at least 1"));
        }
        Ok(IntegratorSpec { scheme, dt, cutoff, degree })
    }
}

/// A snapshot `u(t)` together with the conserved quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub field: SpectralField,
    pub mass: f64,
    pub hamiltonian: f64,
}

impl FlowState {
    pub fn new(time: f64, field: SpectralField, degree: u32) -> Result<Self> {
        let h = hamiltonian(&field, degree)?;
        Ok(FlowState { time, mass: mass(&field), hamiltonian: h, field })
    }
}

/// `e^{it Delta}`: `u_k <- e^{-it |k|^2} u_k`.
pub fn linear_propagate(u: &SpectralField, t: f64) -> SpectralField {
    u.map_modes(|k, c| c * Complex64::from_polar(1.0, -t * k.norm_sq() as f64))
}

/// Interaction-picture variable `v(t) = e^{-it Delta} u(t)`.
pub fn interaction_picture(u: &SpectralField, t: f64) -> SpectralField {
    linear_propagate(u, -t)
}

/// `u <- e^{i phi} u`.
pub fn gauge_rotate(u: &SpectralField, phi: f64) -> SpectralField {
    let mut w = u.clone();
    w.scale(Complex64::from_polar(1.0, phi));
    w
}

/// Number of steps of size close to `dt` that land exactly on `t_final`.
fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(invalid("t_final", format!("need a finite time >= 0, got {t_final}")));
    }
    let n = (t_final / dt).round();
    if n == 0.0 && t_final > 0.0 {
        return Err(invalid("dt", "time step exceeds the requested interval"));
    }
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(invalid("dt", format!("t_final = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Stepper holding the scratch state of one scheme.
pub struct Stepper {
    spec: IntegratorSpec,
    kernel: PowerKernel,
}

impl Stepper {
    pub fn new(spec: IntegratorSpec) -> Result<Self> {
        let kernel = PowerKernel::projected(spec.cutoff, spec.degree)?;
        Ok(Stepper { spec, kernel })
    }

    /// `d_t v` for the interaction variable at time `t`.
    fn interaction_rhs(&mut self, v: &SpectralField, t: f64) -> Result<SpectralField> {
        let u = linear_propagate(v, t);
        let nl = self.kernel.apply(&u)?;
        Ok(nl.map_modes(|k, c| Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, t * k.norm_sq() as f64) * c))
    }

    /// Advances `u(t)` to `u(t + h)`.
    pub fn step(&mut self, u: &SpectralField, t: f64, h: f64) -> Result<SpectralField> {
        match self.spec.scheme {
            Scheme::StrangSplit => {
                let a = linear_propagate(u, 0.5 * h);
                let b = self.kernel.rotate(&a, h)?;
                Ok(linear_propagate(&b, 0.5 * h))
            }
            Scheme::RK4Interaction => {
                let v = interaction_picture(u, t);
                let k1 = self.interaction_rhs(&v, t)?;
                let mut tmp = v.clone();
                tmp.add_scaled(Complex64::new(0.5 * h, 0.0), &k1);
                let k2 = self.interaction_rhs(&tmp, t + 0.5 * h)?;
                let mut tmp = v.clone();
                tmp.add_scaled(Complex64::new(0.5 * h, 0.0), &k2);
                let k3 = self.interaction_rhs(&tmp, t + 0.5 * h)?;
                let mut tmp = v.clone();
                tmp.add_scaled(Complex64::new(h, 0.0), &k3);
                let k4 = self.interaction_rhs(&tmp, t + h)?;
                let mut next = v;
                next.add_scaled(Complex64::new(h / 6.0, 0.0), &k1);
                next.add_scaled(Complex64::new(h / 3.0, 0.0), &k2);
                next.add_scaled(Complex64::new(h / 3.0, 0.0), &k3);
                next.add_scaled(Complex64::new(h / 6.0, 0.0), &k4);
                Ok(linear_propagate(&next, t + h))
            }
        }
    }
}

/// Integrates from `u0` at time 0 to `t_final`, keeping every `every`-th step
/// (the initial and final states are always kept).
pub fn evolve_sampled(
    u0: &SpectralField,
    t_final: f64,
    spec: &IntegratorSpec,
    every: usize,
) -> Result<Vec<FlowState>> {
    if every == 0 {
        return Err(invalid("every", "snapshot stride must be positive"));
    }
    if u0.cutoff() != spec.cutoff {
        return Err(Error::CutoffMismatch { expected: spec.cutoff, found: u0.cutoff() });
    }
    if !u0.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let steps = step_count(t_final, spec.dt)?;
    let h = if steps == 0 { spec.dt } else { t_final / steps as f64 };
    let mut stepper = Stepper::new(*spec)?;
    let mut states = vec![FlowState::new(0.0, u0.clone(), spec.degree)?];
    let mut u = u0.clone();
    let mut last_good = states[0].clone();
    for n in 1..=steps {
        let t = (n - 1) as f64 * h;
        u = stepper.step(&u, t, h)?;
        if !u.is_finite() {
            return Err(Error::Diverged { step: n, last_good: Box::new(last_good) });
        }
        if n % every == 0 || n == steps {
            let state = FlowState::new(n as f64 * h, u.clone(), spec.degree)?;
            if !state.hamiltonian.is_finite() {
                return Err(Error::Diverged { step: n, last_good: Box::new(last_good) });
            }
            last_good = state.clone();
            states.push(state);
        }
    }
    Ok(states)
}

/// Integrates from `u0` at time 0 to `t_final`, returning every step.
pub fn evolve(u0: &SpectralField, t_final: f64, spec: &IntegratorSpec) -> Result<Vec<FlowState>> {
    evolve_sampled(u0, t_final, spec, 1)
}

/// Final state of the flow, without storing the trajectory.
pub fn evolve_to(u0: &SpectralField, t_final: f64, spec: &IntegratorSpec) -> Result<SpectralField> {
    let steps = step_count(t_final, spec.dt)?;
    let states = evolve_sampled(u0, t_final, spec, steps.max(1))?;
    Ok(states.last().expect("at least the initial state").field.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Mode;

    #[test]
    fn step_count_requires_commensurate_grid() {
        assert_eq!(step_count(1.0, 1e-3).unwrap(), 1000);
        assert!(step_count(1.0, 0.3).is_err());
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
    }

    #[test]
    fn single_mode_phase_rotation() {
        // A single mode solves the ODE exactly: u_k(t) = a e^{-it(|k|^2 + |a|^{2m-2})}.
        let k = Mode::new(1, 2);
        let a = Complex64::new(0.6, -0.3);
        let u0 = SpectralField::from_modes(3, [(k, a)]).unwrap();
        for scheme in [Scheme::StrangSplit, Scheme::RK4Interaction] {
            let spec = IntegratorSpec::new(scheme, 0.01, 3, 2).unwrap();
            let u = evolve_to(&u0, 0.5, &spec).unwrap();
            let expect = a * Complex64::from_polar(1.0, -0.5 * (5.0 + a.norm_sqr()));
            assert!((u.get(k) - expect).norm() < 1e-9, "{scheme:?}");
        }
    }

    #[test]
    fn gauge_and_picture_roundtrip() {
        let u = SpectralField::from_modes(2, [(Mode::new(1, 1), Complex64::new(1.0, 2.0))]).unwrap();
        let back = linear_propagate(&interaction_picture(&u, 0.7), 0.7);
        assert!(back.max_abs_diff(&u) < 1e-15);
        let g = gauge_rotate(&gauge_rotate(&u, 0.3), -0.3);
        assert!(g.max_abs_diff(&u) < 1e-15);
    }
}
