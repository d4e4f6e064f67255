//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `a^H b`
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &CVec) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// `sum_i |h^H w_i|^2` style accumulation of a Hermitian outer product.
pub fn add_outer(acc: &mut CMat, v: &CVec, weight: f64) {
    let n = v.len();
    for r in 0..n {
        for col in 0..n {
            acc[(r, col)] += v[r] * v[col].conj() * weight;
        }
    }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn cholesky(m: &CMat) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(hermitian_part(m))
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// `x = M^{-1} b` for Hermitian positive definite `M`.
pub fn solve_hpd(m: &CMat, b: &CVec) -> Result<CVec> {
    Ok(cholesky(m)?.solve(b))
}

pub fn inverse_hpd(m: &CMat) -> Result<CMat> {
    Ok(cholesky(m)?.inverse())
}

/// Natural log-determinant of a Hermitian positive definite matrix.
pub fn ln_det_hpd(m: &CMat) -> Result<f64> {
    let ch = cholesky(m)?;
    let l = ch.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Factor a Hermitian PSD matrix as `F^H F`, returning the rows of `F`.
///
/// Eigenvalues in `[-tol * max|lambda|, 0)` are clipped to zero; anything more
/// negative is reported as indefinite. Zero rows are dropped.
pub fn psd_factor_rows(m: &CMat, rel_tol: f64) -> Result<Vec<CVec>> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut rows = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < 0.0 {
            if lam < -rel_tol * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Indefinite(lam));
            }
            continue;
        }
        if lam <= rel_tol * scale {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        // row of F is sqrt(lam) v^H, stored as the conjugated coefficient vector
        rows.push(DVector::from_iterator(v.len(), v.iter().map(|x| x.conj() * lam.sqrt())));
    }
    Ok(rows)
}

/// `F x` for a row stored as coefficients, i.e. `sum_n row_n x_n`.
pub fn row_apply(row: &CVec, x: &CVec) -> Complex64 {
    row.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

pub fn real_matrix_is_binary(m: &DMatrix<f64>, tol: f64) -> bool {
    m.iter().all(|&v| (v - 0.0).abs() <= tol || (v - 1.0).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CMat {
        let a = CMat::from_fn(3, 3, |r, col| c((r * 3 + col) as f64 * 0.3 - 1.0, (r as f64 - col as f64) * 0.7));
        &a * a.adjoint() + CMat::identity(3, 3)
    }

    #[test]
    fn factor_reconstructs() {
        let m = sample();
        let rows = psd_factor_rows(&m, 1e-12).unwrap();
        let mut rec = CMat::zeros(3, 3);
        for r in &rows {
            // F^H F = sum_r conj(row) row^T
            for i in 0..3 {
                for j in 0..3 {
                    rec[(i, j)] += r[i].conj() * r[j];
                }
            }
        }
        assert!((rec - m).norm() < 1e-10);
    }

    #[test]
    fn ln_det_matches_eigenvalues() {
        let m = sample();
        let eig = SymmetricEigen::new(m.clone());
        let want: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert!((ln_det_hpd(&m).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn indefinite_rejected() {
        let mut m = CMat::identity(2, 2);
        m[(1, 1)] = c(-0.5, 0.0);
        assert!(matches!(psd_factor_rows(&m, 1e-10), Err(Error::Indefinite(_))));
    }
}
