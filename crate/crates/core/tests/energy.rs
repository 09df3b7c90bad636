use nlsq_core::energy::{
    is_admissible, literal_derivative_terms, omega, psi2s, EnergyModel, TupleTable,
};
use nlsq_core::ensemble::{sample_mu_s, EnsembleSpec};
use nlsq_core::flow::{evolve_to, linear_propagate, IntegratorSpec, Scheme};
use nlsq_core::{Mode, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;

fn random_field(cutoff: u32, seed: u64, index: usize) -> SpectralField {
    let spec = EnsembleSpec::new(1.5, cutoff, index + 1, seed).unwrap();
    sample_mu_s(&spec, index).unwrap()
}

/// Brute-force `R_s` by looping over all 4-tuples of the ball.
fn brute_correction(u: &SpectralField, s: f64) -> Complex64 {
    let modes = u.ball().modes().to_vec();
    let mut acc = Complex64::new(0.0, 0.0);
    for &a in &modes {
        for &b in &modes {
            for &c in &modes {
                for &d in &modes {
                    let t = [a, b, c, d];
                    if !is_admissible(&t) {
                        continue;
                    }
                    let om = omega(&t);
                    if om == 0 {
                        continue;
                    }
                    acc += psi2s(&t, s) / om as f64 * u.get(a) * u.get(b).conj() * u.get(c) * u.get(d).conj();
                }
            }
        }
    }
    acc / 4.0
}

#[test]
fn table_matches_brute_force_counts() {
    let table = TupleTable::new(2, 2, 1e9).unwrap();
    let modes = table.ball().modes().to_vec();
    let mut count = 0;
    for &a in &modes {
        for &b in &modes {
            for &c in &modes {
                for &d in &modes {
                    if is_admissible(&[a, b, c, d]) {
                        count += 1;
                    }
                }
            }
        }
    }
    assert_eq!(table.len(), count);
}

#[test]
fn omega_and_psi_of_paired_tuple_vanish() {
    let k = Mode::new(2, 1);
    let l = Mode::new(-1, 3);
    let t = [k, k, l, l];
    assert_eq!(omega(&t), 0);
    assert_eq!(psi2s(&t, 2.5), 0.0);
    assert_eq!(omega(&[Mode::new(1, 0), Mode::new(1, 1), Mode::new(0, 1), Mode::ZERO]), 0);
}

#[test]
fn correction_matches_brute_force_and_is_real() {
    let u = random_field(2, 7, 3);
    let model = EnergyModel::new(2, 2, 2.5).unwrap();
    let raw = model.correction_accumulator(&u).unwrap();
    let brute = brute_correction(&u, 2.5);
    assert!((raw / 4.0 - brute).norm() < 1e-12 * (1.0 + brute.norm()));
    assert!(raw.im.abs() < 1e-12 * (1.0 + raw.norm()));
    let ri = model.resonant_accumulator(&u).unwrap();
    assert!(ri.re.abs() < 1e-12 * (1.0 + ri.norm()));
}

#[test]
fn single_mode_has_no_correction() {
    let u = SpectralField::from_modes(3, [(Mode::new(2, 1), Complex64::new(0.8, 0.2))]).unwrap();
    let model = EnergyModel::new(3, 2, 2.0).unwrap();
    assert_eq!(model.correction(&u).unwrap(), 0.0);
    let mut ws = model.workspace().unwrap();
    let d = model.derivative_terms_u(&u, &mut ws).unwrap();
    assert!(d.total().abs() < 1e-14);
}

#[test]
fn substitution_matches_literal_double_sum() {
    let model = EnergyModel::new(2, 2, 2.5).unwrap();
    let mut ws = model.workspace().unwrap();
    for i in 0..5 {
        let v = random_field(2, 11, i);
        let t = 0.3 * i as f64;
        let fast = model.derivative_terms(&v, t, &mut ws).unwrap();
        let slow = literal_derivative_terms(&v, t, 2.5, 2, 1e9).unwrap();
        for (a, b) in [
            (fast.term_i, slow.term_i),
            (fast.term_ii, slow.term_ii),
            (fast.term_iii, slow.term_iii),
        ] {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn derivative_matches_centered_difference_along_flow() {
    let (n, s) = (3, 2.5);
    let model = EnergyModel::new(n, 2, s).unwrap();
    let mut ws = model.workspace().unwrap();
    let u0 = random_field(n, 5, 0);
    let spec = IntegratorSpec::new(Scheme::RK4Interaction, 1e-4, n, 2).unwrap();
    let t0 = 0.2;
    let u_mid = evolve_to(&u0, t0, &spec).unwrap();
    let q = model.derivative_terms_u(&u_mid, &mut ws).unwrap().total();
    let centered = |h: f64| {
        let up = evolve_to(&u_mid, h, &spec).unwrap();
        // Time reversal: conj(u(-t)) solves the same equation.
        let c = u_mid.map_modes(|_, z| z.conj());
        let back = evolve_to(&c, h, &spec).unwrap().map_modes(|_, z| z.conj());
        (model.energy(&up).unwrap() - model.energy(&back).unwrap()) / (2.0 * h)
    };
    let (f1, f2) = (centered(4e-3), centered(2e-3));
    let (r1, r2) = ((f1 - q).abs(), (f2 - q).abs());
    assert!((r1 / r2 - 4.0).abs() < 0.4, "r1 {r1} r2 {r2}");
    let extrapolated = (4.0 * f2 - f1) / 3.0;
    assert!((extrapolated - q).abs() < 1e-6 * (1.0 + q.abs()));
}

#[test]
fn energy_is_invariant_under_linear_flow_in_the_v_picture() {
    // E_{s,t}(v) = E_s(e^{it Delta} v): evaluating at v = e^{-it Delta} u recovers E_s(u).
    let model = EnergyModel::new(2, 2, 2.0).unwrap();
    let u = random_field(2, 1, 0);
    let v = linear_propagate(&u, -0.37);
    let e1 = model.energy(&u).unwrap();
    let e2 = model.energy(&linear_propagate(&v, 0.37)).unwrap();
    assert!((e1 - e2).abs() < 1e-12 * e1.abs());
}

#[test]
fn over_budget_enumeration_is_rejected() {
    assert!(EnergyModel::with_budget(8, 3, 2.0, 1e6).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn correction_is_real_and_gauge_invariant(seed in 0u64..1000, phase in -3.0f64..3.0) {
        let u = random_field(2, seed, 0);
        let model = EnergyModel::new(2, 2, 2.5).unwrap();
        let raw = model.correction_accumulator(&u).unwrap();
        prop_assert!(raw.im.abs() <= 1e-12 * (1.0 + raw.norm()));
        let mut g = u.clone();
        g.scale(Complex64::from_polar(1.0, phase));
        let r1 = model.correction(&u).unwrap();
        let r2 = model.correction(&g).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-12 * (1.0 + r1.abs()));
    }

    #[test]
    fn tuple_table_entries_are_admissible(cutoff in 0u32..3) {
        let table = TupleTable::new(cutoff, 2, 1e9).unwrap();
        for t in 0..table.len() {
            let modes = table.modes(t);
            prop_assert!(is_admissible(&modes));
            prop_assert_eq!(omega(&modes), table.omega(t));
        }
    }
}
