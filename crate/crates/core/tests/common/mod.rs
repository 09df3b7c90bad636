//! Oracles shared by the integration tests.
#![allow(dead_code)]

use nlsq_core::flow::linear_propagate;
use nlsq_core::grid::renormalized_cubic;
use nlsq_core::SpectralField;
use num_complex::Complex64;

/// `-i int_0^t e^{-it' Delta} :|e^{it' Delta} phi|^2 e^{it' Delta} phi: dt'` by
/// composite Simpson with `intervals` (even) panels.
pub fn duhamel_simpson(phi: &SpectralField, t: f64, intervals: usize) -> SpectralField {
    assert!(intervals % 2 == 0);
    let h = t / intervals as f64;
    let integrand = |s: f64| linear_propagate(&renormalized_cubic(&linear_propagate(phi, s)).unwrap(), -s);
    let mut acc = integrand(0.0);
    let last = integrand(t);
    acc.add_scaled(Complex64::new(1.0, 0.0), &last);
    for j in 1..intervals {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc.add_scaled(Complex64::new(w, 0.0), &integrand(j as f64 * h));
    }
    acc.scale(Complex64::new(0.0, -h / 3.0));
    acc
}
