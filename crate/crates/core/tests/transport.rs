use nlsq_core::ensemble::{lp_norm_from_values, EnsembleSpec};
use nlsq_core::transport::{
    cutoff_values, fit_beta, functional_moment_scan, gronwall_envelope, split_point, transported_set_bound,
    weak_lq_bound, weak_lq_report, weighted_density_moments, weighted_density_scan, CutoffSettings, DensityBoundParams,
    EnergyCutoff,
};
use nlsq_core::{Error, Mode};
use proptest::prelude::*;

const GOLDEN_WEAK_LQ: f64 = 2.5746484576465048e87;

fn base() -> DensityBoundParams {
    DensityBoundParams { c0: 1.0, alpha: 0.5, m_p: 1.0, t: 1.0, q: 2.0, b0: 1.0 }
}

/// Classical RK4 for `y' = C0 r^{1-alpha} y^{1-1/r}`.
fn ode_rk4(y0: f64, p: &DensityBoundParams, r: f64, t: f64, steps: usize) -> f64 {
    let f = |y: f64| p.c0 * r.powf(1.0 - p.alpha) * y.max(0.0).powf(1.0 - 1.0 / r);
    let h = t / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn envelope_matches_ode_solution() {
    let p = base();
    for y0 in [0.25, 1.0, 3.0] {
        for t in [0.1, 0.5, 1.0] {
            let exact = gronwall_envelope(y0, &p, 2.0, t).unwrap();
            let numeric = ode_rk4(y0, &p, 2.0, t, 4000);
            assert!((exact - numeric).abs() <= 1e-8, "y0 {y0} t {t}: {exact} vs {numeric}");
        }
    }
}

#[test]
fn weak_lq_golden_value() {
    let v = weak_lq_bound(&base()).unwrap();
    assert!(((v - GOLDEN_WEAK_LQ) / GOLDEN_WEAK_LQ).abs() <= 1e-10, "{v:e}");
}

#[test]
fn weak_lq_is_monotone_and_at_least_one() {
    let p = base();
    let v1 = weak_lq_bound(&p).unwrap();
    let v2 = weak_lq_bound(&DensityBoundParams { t: 2.0, ..p }).unwrap();
    let v3 = weak_lq_bound(&DensityBoundParams { c0: 2.0, ..p }).unwrap();
    assert!(v2 >= v1 && v3 >= v1 && v1 >= 1.0);
}

#[test]
fn alpha_ordering_at_t_four() {
    let p = DensityBoundParams { t: 4.0, ..base() };
    let rough = weak_lq_bound(&p).unwrap();
    let smooth = weak_lq_bound(&DensityBoundParams { alpha: 1.0 - 1e-6, ..p }).unwrap();
    assert!(rough >= smooth, "{rough:e} vs {smooth:e}");
    assert!(smooth.is_finite() && smooth >= 1.0);
}

#[test]
fn split_point_respects_each_condition() {
    let p = DensityBoundParams { t: 40.0, q: 1.5, m_p: 3.0, ..base() };
    let b0 = split_point(&p).unwrap();
    assert!(b0 >= (p.t / (4.0 * p.q)).powf(2.0 / p.alpha));
    assert!(b0 >= (p.m().ln() / (4.0 * p.q)).exp().exp());
    let r = weak_lq_report(&p).unwrap();
    assert_eq!(r.b0, b0);
    assert_eq!(r.value, r.small_sets.max(r.large_sets));
}

#[test]
fn transported_bound_examples() {
    let p = base();
    assert_eq!(transported_set_bound(0.0, &p, 0.25).unwrap(), 0.0);
    let c = weak_lq_bound(&DensityBoundParams { q: 4.0, ..p }).unwrap();
    assert_eq!(transported_set_bound(1.0, &p, 0.25).unwrap(), c);
    let ratio = transported_set_bound(0.3, &p, 0.25).unwrap() / transported_set_bound(0.15, &p, 0.25).unwrap();
    assert!((ratio - 2f64.powf(0.75)).abs() < 1e-12);
    assert!(transported_set_bound(1.5, &p, 0.25).is_err());
}

#[test]
fn trivial_functional_has_unit_moment() {
    let spec = EnsembleSpec::new(2.5, 4, 200, 1).unwrap();
    let settings = CutoffSettings::new(1e6, 2).unwrap();
    let (values, accepted) = cutoff_values(&spec, &settings, || (), |_, _| Ok(0f64.exp())).unwrap();
    assert_eq!(accepted, 200);
    let est = lp_norm_from_values(&values, 2.0).unwrap();
    assert_eq!(est.mean, 1.0);
    assert!(est.stderr < 1e-14);
}

#[test]
fn constant_functional_has_zero_exponent() {
    let spec = EnsembleSpec::new(2.5, 3, 100, 2).unwrap();
    let settings = CutoffSettings::new(1e6, 2).unwrap();
    let scan = functional_moment_scan(&[2.0, 4.0, 8.0], &settings, &spec, || (), |_, _| Ok(3.0)).unwrap();
    assert!(scan.fitted_beta.abs() < 1e-12);
    assert_eq!(scan.acceptance, 1.0);
}

#[test]
fn empty_cutoff_is_flagged() {
    let spec = EnsembleSpec::new(2.5, 4, 50, 3).unwrap();
    let mut settings = CutoffSettings::new(1.0, 2).unwrap();
    settings.cutoff = EnergyCutoff::Integral;
    let err = weighted_density_moments(2.5, &settings, 2.0, &spec).unwrap_err();
    assert!(matches!(err, Error::NoAcceptedSamples { count: 50 }), "{err}");
}

/// `|| |g1 g2| ||_{L^p} = Gamma(p/2 + 1)^{2/p}` for independent standard complex Gaussians.
fn exact_pair_norm(p: f64) -> f64 {
    (2.0 * libm::lgamma(p / 2.0 + 1.0) / p).exp()
}

#[test]
fn fitting_pipeline_recovers_known_chaos_slope() {
    let p_values = [2.0, 3.0, 4.0];
    let spec = EnsembleSpec::new(2.5, 2, 100_000, 5).unwrap();
    let settings = CutoffSettings::new(1e6, 2).unwrap();
    let (a, b) = (Mode::new(1, 0), Mode::new(0, -1));
    let weight = 2f64.powf(2.5);
    let scan =
        functional_moment_scan(&p_values, &settings, &spec, || (), |_, u| Ok(weight * u.get(a).norm() * u.get(b).norm()))
            .unwrap();
    let exact: Vec<_> = p_values
        .iter()
        .map(|&p| nlsq_core::ensemble::MCEstimate { mean: exact_pair_norm(p), stderr: 0.0, count: 1 })
        .collect();
    let (beta, _) = fit_beta(&p_values, &exact).unwrap();
    for (e, &p) in scan.estimates.iter().zip(&p_values) {
        assert!((e.mean - exact_pair_norm(p)).abs() <= 4.0 * e.stderr, "p {p}: {e:?}");
    }
    assert!((scan.fitted_beta - beta).abs() <= 0.05, "{} vs {beta}", scan.fitted_beta);
}

#[test]
fn weighted_moments_are_stable_and_ordered() {
    let settings = CutoffSettings::new(10.0, 2).unwrap();
    let spec = EnsembleSpec::new(2.5, 3, 4000, 9).unwrap();
    let small = weighted_density_scan(2.5, &settings, &[2.0, 4.0], &spec).unwrap();
    let big = weighted_density_scan(2.5, &settings, &[2.0, 4.0], &spec.with_count(8000)).unwrap();
    for (a, b) in small.iter().zip(&big) {
        assert!(a.estimate.mean.is_finite() && a.estimate.stderr > 0.0);
        let se = a.estimate.stderr.hypot(b.estimate.stderr);
        assert!((a.estimate.mean - b.estimate.mean).abs() <= 3.0 * se);
    }
    assert!(small[1].estimate.mean >= small[0].estimate.mean - 3.0 * small[0].estimate.stderr);
    assert!(weighted_density_moments(2.0, &settings, 2.0, &spec).is_err());
}

#[test]
fn moments_do_not_depend_on_worker_count() {
    let settings = CutoffSettings::new(10.0, 2).unwrap();
    let spec = EnsembleSpec::new(2.5, 3, 300, 4).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| weighted_density_moments(2.5, &settings, 2.0, &spec).unwrap())
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_is_monotone(y0 in 0.0f64..5.0, dy in 0.0f64..1.0, c0 in 0.01f64..3.0, dc in 0.0f64..1.0,
                            t in -3.0f64..3.0, dt in 0.0f64..1.0, r in 1.01f64..10.0) {
        let p = DensityBoundParams { c0, ..base() };
        let q = DensityBoundParams { c0: c0 + dc, ..base() };
        let v = gronwall_envelope(y0, &p, r, t).unwrap();
        prop_assert!(gronwall_envelope(y0 + dy, &p, r, t).unwrap() >= v);
        prop_assert!(gronwall_envelope(y0, &q, r, t).unwrap() >= v);
        prop_assert!(gronwall_envelope(y0, &p, r, t.abs() + dt).unwrap() >= v);
        prop_assert!(v >= y0 * (1.0 - 1e-12));
    }

    #[test]
    fn transported_bound_is_monotone_in_measure(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = base();
        prop_assert!(transported_set_bound(lo, &p, 0.5).unwrap() <= transported_set_bound(hi, &p, 0.5).unwrap());
    }
}
