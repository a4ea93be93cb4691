//! Small complex dense linear-algebra helpers on top of `nalgebra`.
//!
//! Matrices are column-major `DMatrix<Complex64>`. The effective channel
//! matrix keeps one column per user, so most helpers work column-wise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{JuiceError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance on `‖A − Aᴴ‖_F / ‖A‖_F` used when checking Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn fro_norm_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fro_norm(a: &CMatrix) -> f64 {
    fro_norm_sq(a).sqrt()
}

/// Euclidean norm of column `j`.
pub fn col_norm(a: &CMatrix, j: usize) -> f64 {
    a.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn col_norms(a: &CMatrix) -> Vec<f64> {
    (0..a.ncols()).map(|j| col_norm(a, j)).collect()
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Relative Hermitian defect `‖A − Aᴴ‖_F / max(‖A‖_F, tiny)`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let diff = a - a.adjoint();
    fro_norm(&diff) / fro_norm(a).max(f64::MIN_POSITIVE)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// Fails with [`JuiceError::NotPositiveDefinite`] when the matrix is not
/// Hermitian within [`HERMITIAN_TOL`] or the factorization breaks down.
pub fn cholesky(a: &CMatrix, what: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    if !a.is_square() {
        return Err(JuiceError::Dimension(format!(
            "{what}: expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(JuiceError::NotPositiveDefinite(what));
    }
    if hermitian_defect(a) > HERMITIAN_TOL {
        return Err(JuiceError::NotPositiveDefinite(what));
    }
    let chol = Cholesky::new(hermitian_part(a)).ok_or(JuiceError::NotPositiveDefinite(what))?;
    // complex square roots never fail, so a negative pivot shows up as a non-real diagonal
    let pivots_ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= HERMITIAN_TOL * d.re);
    if !pivots_ok {
        return Err(JuiceError::NotPositiveDefinite(what));
    }
    Ok(chol)
}

/// `log det A` for Hermitian positive-definite `A`, via Cholesky.
pub fn logdet_hpd(a: &CMatrix) -> Result<f64> {
    let chol = cholesky(a, "log-determinant argument")?;
    Ok(logdet_from_cholesky(&chol))
}

pub fn logdet_from_cholesky(chol: &Cholesky<Complex64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Inverse of a Hermitian positive-definite matrix, re-symmetrized.
pub fn inverse_hpd(a: &CMatrix, what: &'static str) -> Result<CMatrix> {
    let chol = cholesky(a, what)?;
    Ok(hermitian_part(&chol.inverse()))
}

/// Principal square root `A^{1/2}` of a Hermitian positive-semidefinite matrix.
pub fn sqrt_hpsd(a: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    let scaled = CMatrix::from_fn(u.nrows(), u.ncols(), |r, k| u[(r, k)] * roots[k]);
    hermitian_part(&(scaled * u.adjoint()))
}

/// True when `a` is Hermitian within tolerance and its smallest eigenvalue is
/// strictly positive.
pub fn is_hpd(a: &CMatrix) -> bool {
    a.is_square()
        && hermitian_defect(a) <= HERMITIAN_TOL
        && hermitian_eigenvalues(a).first().is_some_and(|&l| l > 0.0)
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Columns of `a` indexed by `cols`, in order.
pub fn select_columns(a: &CMatrix, cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(a.nrows(), cols.len(), |r, k| a[(r, cols[k])])
}

/// Writes the columns of `src` back into `dst` at positions `cols`.
pub fn scatter_columns(dst: &mut CMatrix, src: &CMatrix, cols: &[usize]) {
    for (k, &j) in cols.iter().enumerate() {
        dst.set_column(j, &src.column(k));
    }
}

/// Elementwise complex conjugate.
pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}
