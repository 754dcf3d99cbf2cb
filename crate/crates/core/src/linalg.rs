use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn cholesky(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: non-finite entry")));
    }
    a.cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what}: matrix is not positive definite")))
}

/// `log |A|` from the Cholesky factor of `A`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L w = b` in place with the lower factor.
pub(crate) fn forward_solve(chol: &Cholesky<f64, Dyn>, b: &mut DVector<f64>) {
    chol.l_dirty().solve_lower_triangular_unchecked_mut(b);
}

/// Solves `L' w = b` in place.
pub(crate) fn backward_solve(chol: &Cholesky<f64, Dyn>, b: &mut DVector<f64>) {
    chol.l_dirty().tr_solve_lower_triangular_unchecked_mut(b);
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Orthonormal basis for the column space of `a`, discarding directions whose
/// singular value is below `rel_tol * σ_max`. Returns the basis and the rank.
pub(crate) fn column_space(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    if a.ncols() == 0 {
        return (DMatrix::zeros(a.nrows(), 0), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (smax > 0.0 && s > rel_tol * smax).then_some(i))
        .collect();
    let rank = keep.len();
    (u.select_columns(keep.iter()), rank)
}

/// `‖(I − P) v‖²` where `P` projects onto the span of the orthonormal `basis`.
pub(crate) fn residual_norm_sq(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    if basis.ncols() == 0 {
        return v.norm_squared();
    }
    let coef = basis.tr_mul(v);
    (v - basis * coef).norm_squared()
}
