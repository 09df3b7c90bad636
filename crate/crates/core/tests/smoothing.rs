mod common;

use nlsq_core::ensemble::{sample_mu_s, EnsembleSpec};
use nlsq_core::flow::{evolve_sampled, linear_propagate, FlowState, IntegratorSpec, Scheme};
use nlsq_core::lattice::{sobolev_norm, NormConvention};
use nlsq_core::smoothing::{
    counterexample_norms, divergence_scan, gauge_rate, picard_iterate, slab_block_norm, smoothing_remainder,
    smoothing_remainder_with_rate, CounterexampleData,
};
use nlsq_core::{Mode, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;

fn two_mode(seed: u64) -> SpectralField {
    let spec = EnsembleSpec::new(1.5, 2, 1, seed).unwrap();
    let g = sample_mu_s(&spec, 0).unwrap();
    SpectralField::from_modes(3, [(Mode::new(1, 0), g.get(Mode::new(1, 0))), (Mode::new(-1, 2), g.get(Mode::new(0, 1)))])
        .unwrap()
}

fn rel_err(a: &SpectralField, b: &SpectralField) -> f64 {
    a.max_abs_diff(b) / b.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[test]
fn closed_form_matches_duhamel_quadrature() {
    for seed in 0..3 {
        let phi = two_mode(seed);
        for t in [0.3, 1.0] {
            let closed = picard_iterate(&phi, t).unwrap();
            let quad = common::duhamel_simpson(&phi, t, 400);
            assert!(rel_err(&closed, &quad) < 1e-6, "seed {seed} t {t}: {}", rel_err(&closed, &quad));
        }
    }
}

#[test]
fn counterexample_coefficient_constant() {
    let data = CounterexampleData::new(4, 0.5).unwrap();
    let phi = data.field();
    let t = 1.0;
    let quad = common::duhamel_simpson(&phi, t, 2000);
    let closed = picard_iterate(&phi, t).unwrap();
    assert!(rel_err(&closed, &quad) < 1e-6);
    let scale = t.sin() * Complex64::from_polar(1.0, -t) * data.amplitude();
    // Interior slab targets see only the two principal triples.
    for eta in 5..8 {
        let c = quad.get(Mode::new(1, eta)) / scale;
        assert!((c - Complex64::new(0.0, -2.0)).norm() < 1e-6, "eta {eta}: C = {c}");
    }
}

#[test]
fn principal_triples_have_omega_two() {
    let data = CounterexampleData::new(6, 0.5).unwrap();
    let phi = data.field();
    let support: Vec<Mode> = phi.iter().filter(|(_, c)| c.norm() > 0.0).map(|(k, _)| k).collect();
    let target = Mode::new(1, 8);
    let mut omegas = Vec::new();
    for &a in &support {
        for &b in &support {
            for &c in &support {
                if b != a && b != c && a - b + c == target {
                    omegas.push(a.norm_sq() - b.norm_sq() + c.norm_sq() - target.norm_sq());
                }
            }
        }
    }
    assert_eq!(omegas, vec![2, 2]);
    // The resonant self-term vanishes there: the data is zero at (1, eta).
    assert_eq!(phi.get(target), Complex64::new(0.0, 0.0));
}

#[test]
fn boundary_triple_reaches_the_first_slab_target() {
    let data = CounterexampleData::new(5, 0.5).unwrap();
    let phi = data.field();
    let it = picard_iterate(&phi, 1.0).unwrap();
    let scale = 1f64.sin() * Complex64::from_polar(1.0, -1.0) * data.amplitude();
    let c_edge = it.get(Mode::new(1, 5)) / scale;
    assert!((c_edge - Complex64::new(0.0, -2.0)).norm() > 1e-3);
    assert!((c_edge - Complex64::new(0.0, -2.0)).norm() < 0.1);
}

#[test]
fn data_norm_is_of_order_one() {
    for n in [1, 2, 8, 32, 128] {
        let phi = CounterexampleData::new(n, 0.5).unwrap().field();
        let norm = sobolev_norm(&phi, 0.5, NormConvention::Bracket).unwrap();
        assert!((0.5..=5.0).contains(&norm), "n {n}: {norm}");
    }
}

#[test]
fn divergence_slope_matches_regularity_gap() {
    let scan = divergence_scan(0.5, 1.0, 1.0, &[8, 16, 32, 64]).unwrap();
    assert!((scan.slope - 0.5).abs() <= 0.1, "{scan:?}");
    let flat = divergence_scan(0.5, 0.5, 1.0, &[8, 16, 32, 64]).unwrap();
    assert!(flat.slope.abs() <= 0.1, "{flat:?}");
    assert!(divergence_scan(0.5, 1.0, 1.0, &[8, 16]).is_err());
    assert!(divergence_scan(0.5, 1.0, std::f64::consts::PI, &[8, 16, 32]).is_err());
}

#[test]
fn slab_block_collapses_at_pi() {
    let at_one = counterexample_norms(0.5, 1.0, 1.0, 16).unwrap();
    let at_pi = counterexample_norms(0.5, 1.0, std::f64::consts::PI, 16).unwrap();
    assert!(at_pi.slab_block_norm * 10.0 <= at_one.slab_block_norm);
}

#[test]
fn remainder_vanishes_at_time_zero_and_without_nonlinearity() {
    let spec = EnsembleSpec::new(2.5, 4, 1, 3).unwrap();
    let phi = sample_mu_s(&spec, 0).unwrap();
    let traj: Vec<FlowState> = (0..5)
        .map(|j| FlowState::new(0.1 * j as f64, linear_propagate(&phi, 0.1 * j as f64), 2).unwrap())
        .collect();
    let r = smoothing_remainder_with_rate(&phi, &traj, 1.9, 0.0).unwrap();
    assert!(r.w_norms.iter().all(|&w| w < 1e-13));
    let ispec = IntegratorSpec::new(Scheme::RK4Interaction, 1e-2, 4, 2).unwrap();
    let flow = evolve_sampled(&phi, 0.2, &ispec, 5).unwrap();
    let r = smoothing_remainder(&phi, &flow, 1.9).unwrap();
    assert_eq!(r.w_norms[0], 0.0);
    assert_eq!(r.gauge_phase_rate, gauge_rate(&phi));
    let other = sample_mu_s(&EnsembleSpec::new(2.5, 4, 1, 4).unwrap(), 0).unwrap();
    assert!(smoothing_remainder(&other, &flow, 1.9).is_err());
}

#[test]
fn slab_block_norm_reads_only_the_targets() {
    let data = CounterexampleData::new(3, 0.5).unwrap();
    let u = SpectralField::from_modes(8, [(Mode::new(1, 4), Complex64::new(1.0, 0.0)), (Mode::new(0, 4), Complex64::new(5.0, 0.0))]).unwrap();
    assert!((slab_block_norm(&u, &data, 1.0) - 18f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iterate_is_phase_covariant(alpha in -3.0f64..3.0, t in 0.0f64..2.0, seed in 0u64..100) {
        let phi = two_mode(seed);
        let mut rotated = phi.clone();
        rotated.scale(Complex64::from_polar(1.0, alpha));
        let mut expected = picard_iterate(&phi, t).unwrap();
        expected.scale(Complex64::from_polar(1.0, alpha));
        prop_assert!(picard_iterate(&rotated, t).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn gauge_rate_adds_over_disjoint_supports(a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let u = SpectralField::from_modes(3, [(Mode::new(1, 2), Complex64::new(a, 0.0))]).unwrap();
        let v = SpectralField::from_modes(3, [(Mode::new(-2, 0), Complex64::new(0.0, b))]).unwrap();
        let mut w = u.clone();
        w.add_scaled(Complex64::new(1.0, 0.0), &v);
        prop_assert!((gauge_rate(&w) - gauge_rate(&u) - gauge_rate(&v)).abs() < 1e-12);
    }
}
