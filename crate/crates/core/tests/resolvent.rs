use num_complex::Complex64;
use qlev::model::{Model, ModelParams, Theta};
use qlev::resolvent::{bs_matrix, channel_resolvent, Energy};
use std::f64::consts::PI;

/// (1/2π) ∫ dk / (2cos k − z) by the periodic trapezoid rule.
fn r_quadrature(z: Complex64, m: usize) -> Complex64 {
    let h = 2.0 * PI / m as f64;
    (0..m).map(|i| 1.0 / (2.0 * (i as f64 * h).cos() - z)).sum::<Complex64>() / m as f64
}

#[test]
fn resolvent_matches_quadrature_off_axis() {
    for (re, im) in [(0.3, 0.5), (-1.7, 0.2), (2.5, -0.3), (-4.0, 1.0), (1.99, 0.1), (0.0, -2.0)] {
        let z = Complex64::new(re, im);
        let got = channel_resolvent(Energy::Complex(z)).unwrap();
        let want = r_quadrature(z, 8192);
        assert!((got - want).norm() < 1e-12, "z = {z}: {got} vs {want}");
    }
}

#[test]
fn boundary_values_are_limits_from_the_half_planes() {
    // ε → 0 by Richardson (error terms ε, ε²) on quadrature values, fine grid to resolve the Lorentzian
    for x in [-1.5, -0.2, 0.9, 1.8, -3.0, 2.7] {
        let at = |eps: f64| r_quadrature(Complex64::new(x, eps), 1 << 17);
        let (a, b, c) = (at(2e-3), at(1e-3), at(5e-4));
        let limit = (8.0 * c - 6.0 * b + a) / 3.0;
        let got = channel_resolvent(Energy::Plus(x)).unwrap();
        assert!((got - limit).norm() < 1e-5, "x = {x}: {got} vs {limit}");
        let minus = channel_resolvent(Energy::Minus(x)).unwrap();
        assert!((minus - got.conj()).norm() < 1e-15);
    }
}

#[test]
fn density_of_states_inside_the_band() {
    for x in [-1.9, -1.0, 0.0, 0.5, 1.95] {
        let r = channel_resolvent(Energy::Plus(x)).unwrap();
        assert!(r.re.abs() < 1e-15);
        assert!((r.im - 1.0 / (4.0 - x * x).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn thresholds_are_rejected() {
    assert!(channel_resolvent(Energy::Plus(2.0)).is_err());
    assert!(channel_resolvent(Energy::Minus(-2.0)).is_err());
    assert!(channel_resolvent(Energy::Complex(Complex64::new(0.5, 0.0))).is_err());
}

#[test]
fn bs_matrix_is_hermitian_off_the_spectrum_and_conjugate_across_the_cut() {
    let m = Model::new(ModelParams::new(4, Theta::pi_frac(1, 3).unwrap(), vec![1.2, -0.4, 0.0, 2.1])).unwrap();
    let (lo, hi) = m.spectrum_hull();
    for x in [lo - 0.7, hi + 0.01, hi + 5.0] {
        let b = bs_matrix(&m, Energy::Plus(x)).unwrap();
        assert!((&b - b.adjoint()).norm() < 1e-13);
    }
    let x = 0.5 * (lo + hi) + 0.123;
    let p = bs_matrix(&m, Energy::Plus(x)).unwrap();
    let q = bs_matrix(&m, Energy::Minus(x)).unwrap();
    assert!((p.adjoint() - q).norm() < 1e-13);
}
