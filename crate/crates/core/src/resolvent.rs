//! Channel resolvent and the Birman-Schwinger matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{QlevError, Result};
use crate::model::Model;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Energy {
    Complex(Complex64),
    /// `λ + i0`
    Plus(f64),
    /// `λ - i0`
    Minus(f64),
}

impl Energy {
    pub fn shifted(self, by: f64) -> Energy {
        match self {
            Energy::Complex(z) => Energy::Complex(z - by),
            Energy::Plus(x) => Energy::Plus(x - by),
            Energy::Minus(x) => Energy::Minus(x - by),
        }
    }

    pub fn re(self) -> f64 {
        match self {
            Energy::Complex(z) => z.re,
            Energy::Plus(x) | Energy::Minus(x) => x,
        }
    }
}

/// `r(w) = -1/sqrt(w^2 - 4)`, the diagonal of `(2cos Ω - w)^{-1}` at site 0.
pub fn channel_resolvent(w: Energy) -> Result<Complex64> {
    match w {
        Energy::Complex(z) => {
            if z.im == 0.0 && z.re.abs() <= 2.0 {
                return Err(if z.re.abs() == 2.0 {
                    QlevError::ThresholdSingularity(z.re)
                } else {
                    QlevError::OnCut(z.re)
                });
            }
            Ok(-1.0 / ((z - 2.0).sqrt() * (z + 2.0).sqrt()))
        }
        Energy::Plus(x) | Energy::Minus(x) => {
            if x.abs() == 2.0 {
                return Err(QlevError::ThresholdSingularity(x));
            }
            let d = (x - 2.0) * (x + 2.0);
            if x.abs() > 2.0 {
                Ok(Complex64::new(-x.signum() / d.sqrt(), 0.0))
            } else {
                let s = if matches!(w, Energy::Plus(_)) { 1.0 } else { -1.0 };
                Ok(I * (s / (-d).sqrt()))
            }
        }
    }
}

/// `𝔲 + 𝔳 (Σ_j r(z - λ_j) |ξ_j⟩⟨ξ_j| / N) 𝔳`.
pub fn bs_matrix(model: &Model, energy: Energy) -> Result<DMatrix<Complex64>> {
    let n = model.n();
    let mut b = DMatrix::<Complex64>::zeros(n, n);
    for ch in model.channels() {
        let r = channel_resolvent(energy.shifted(ch.lambda))? / n as f64;
        let w = model.vxi(ch.j);
        for q in 0..n {
            let wq = w[q].conj() * r;
            for p in 0..n {
                b[(p, q)] += w[p] * wq;
            }
        }
    }
    for (k, u) in model.u_sign().iter().enumerate() {
        b[(k, k)] += Complex64::new(*u, 0.0);
    }
    Ok(b)
}

/// Condition number cap for `m_matrix`.
pub const MAX_COND: f64 = 1e12;

/// Inverse of the Birman-Schwinger matrix.
pub fn m_matrix(model: &Model, energy: Energy) -> Result<DMatrix<Complex64>> {
    let b = bs_matrix(model, energy)?;
    invert_checked(&b, energy.re())
}

/// LU inverse, refused when the condition number exceeds [`MAX_COND`].
pub(crate) fn invert_checked(b: &DMatrix<Complex64>, at: f64) -> Result<DMatrix<Complex64>> {
    let cond = crate::linalg::condition_number(b);
    if !(cond < MAX_COND) {
        return Err(QlevError::NonInvertible { energy: at, cond });
    }
    b.clone().lu().try_inverse().ok_or(QlevError::NonInvertible { energy: at, cond })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Number of negative eigenvalues of a Hermitian matrix.
pub fn negative_count(h: &DMatrix<Complex64>) -> usize {
    hermitian_eigenvalues(h).iter().filter(|&&x| x < 0.0).count()
}
