//! Small dense linear-algebra helpers shared by the metrics and the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::graph::{Distribution, StochasticMatrix};

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The input is scaled to 1-norm at most 1/2, the series is summed until the next
/// term is below `1e-18` relative to the partial sum, and the result is squared back.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square());
    let n = a.nrows();
    let norm = one_norm(a);
    let mut s = 0u32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(s as i32);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..64 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if one_norm(&term) <= 1e-18 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// `Π^{-1/2} P Π^{1/2}`, entry `(a, b)` scaled by `√(ρ_b / ρ_a)`.
pub fn similarity(p: &StochasticMatrix, rho: &Distribution) -> DMatrix<f64> {
    let r = rho.values();
    let m = p.matrix();
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(a, b)] * (r[b] / r[a]).sqrt())
}

/// Entrywise square root of a distribution: the unit Perron vector of the similarity transform.
pub fn sqrt_vector(rho: &Distribution) -> DVector<f64> {
    DVector::from_iterator(rho.len(), rho.values().iter().map(|v| v.sqrt()))
}

/// `½(A + Aᵀ)`
pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix, eigenvalues in decreasing order.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    (vals, vecs)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.max()
}
