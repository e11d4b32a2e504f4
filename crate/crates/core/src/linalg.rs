//! Small dense complex helpers built on the Hermitian eigensolver.
//!
//! nalgebra's complex SVD occasionally returns factors that do not recompose the input on the
//! Birman-Schwinger matrices met here, so singular data is taken from Hermitian problems instead.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Singular values, descending, as the nonnegative half of the spectrum of `[[0, B], [B*, 0]]`.
pub fn singular_values(b: &DMatrix<Complex64>) -> Vec<f64> {
    let (r, c) = b.shape();
    let n = r + c;
    let mut d = DMatrix::<Complex64>::zeros(n, n);
    d.view_mut((0, r), (r, c)).copy_from(b);
    d.view_mut((r, 0), (c, r)).copy_from(&b.adjoint());
    let mut e: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
    e.sort_by(|x, y| y.total_cmp(x));
    e.truncate(r.min(c));
    e.iter_mut().for_each(|x| *x = x.max(0.0));
    e
}

/// `σ_max / σ_min`.
pub fn condition_number(b: &DMatrix<Complex64>) -> f64 {
    let sv = singular_values(b);
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Right singular vectors for the `k` smallest singular values (eigenvectors of `B*B`).
pub fn smallest_right_singular_vectors(b: &DMatrix<Complex64>, k: usize) -> Vec<DVector<Complex64>> {
    let e = SymmetricEigen::new(b.adjoint() * b);
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| e.eigenvalues[x].total_cmp(&e.eigenvalues[y]));
    order.iter().take(k).map(|&i| e.eigenvectors.column(i).into_owned()).collect()
}
