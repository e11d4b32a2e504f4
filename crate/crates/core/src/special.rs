//! `η_±`, `φ` and `ψ`.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `sech(x)` without overflow.
pub fn sech(x: f64) -> f64 {
    let a = x.abs();
    let e = (-a).exp();
    2.0 * e / (1.0 + e * e)
}

/// `η_+(s) = tanh(πs) + i sech(πs)`.
pub fn eta_plus(s: f64) -> Complex64 {
    Complex64::new((PI * s).tanh(), sech(PI * s))
}

/// `η_-(s) = tanh(πs) - i sech(πs)`.
pub fn eta_minus(s: f64) -> Complex64 {
    Complex64::new((PI * s).tanh(), -sech(PI * s))
}

/// `φ(s) = -tanh(πs) + i sech(πs)`.
pub fn phi(s: f64) -> Complex64 {
    Complex64::new(-(PI * s).tanh(), sech(PI * s))
}

/// `ψ(y) = √π (cosh(πy/2) - i sinh(πy/2)) / cosh(πy)`, in exp-scaled form.
pub fn psi(y: f64) -> Complex64 {
    // divide through by e^{π|y|}: cosh(πy/2)/cosh(πy) = (e^{-a/2}+e^{-3a/2})/(1+e^{-2a}), a = π|y|
    let a = PI * y.abs();
    let e_half = (-0.5 * a).exp();
    let e_3half = (-1.5 * a).exp();
    let den = 1.0 + (-2.0 * a).exp();
    let c = (e_half + e_3half) / den;
    let s = y.signum() * (e_half - e_3half) / den;
    Complex64::new(PI.sqrt() * c, -PI.sqrt() * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_values() {
        assert!((psi(0.0) - Complex64::new(PI.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(eta_plus(0.0), Complex64::new(0.0, 1.0));
        assert_eq!(eta_minus(0.0), Complex64::new(0.0, -1.0));
        for s in [-50.0, -3.0, -0.2, 0.0, 0.7, 49.0] {
            assert!((eta_plus(s).norm() - 1.0).abs() < 1e-15);
            assert!((phi(s).norm() - 1.0).abs() < 1e-15);
            assert!(psi(s).re.is_finite() && psi(s).im.is_finite());
        }
    }

    #[test]
    fn psi_matches_direct_form() {
        for y in [-3.0, -1.0, -0.25, 0.4, 2.0] {
            let a = PI * y;
            let d = Complex64::new((a / 2.0).cosh(), -(a / 2.0).sinh()) * (PI.sqrt() / a.cosh());
            assert!((psi(y) - d).norm() < 1e-14);
        }
    }
}
