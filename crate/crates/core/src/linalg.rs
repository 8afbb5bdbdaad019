//! Small dense linear-algebra helpers shared by the filters and oracles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{DesignError, Result};

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization with a descriptive error on failure.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    cholesky_with(m, || what.to_string())
}

/// As [`cholesky`], building the description only on failure.
pub fn cholesky_with(m: &DMatrix<f64>, what: impl FnOnce() -> String) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DesignError::NotPositiveDefinite(format!("{} has non-finite entries", what())));
    }
    Cholesky::new(m.clone()).ok_or_else(|| DesignError::NotPositiveDefinite(what()))
}

/// `ln |M|` from a Cholesky factor.
pub fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// `v^T M^{-1} v` from a Cholesky factor of `M`.
pub fn chol_quad(ch: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    // |L^{-1} v|^2
    let mut w = v.clone();
    let l = ch.l_dirty();
    let n = l.nrows();
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    w.norm_squared()
}

/// Principal (symmetric) square root of a symmetric positive semi-definite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * lmax.max(1e-300)) {
        return Err(DesignError::NotPositiveDefinite(
            "matrix has a negative eigenvalue".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Block-diagonal matrix `diag(a, b)`.
pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Natural log of a multivariate normal density.
pub fn ln_normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov_chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = x - mean;
    let n = x.len() as f64;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + chol_logdet(cov_chol) + chol_quad(cov_chol, &d))
}

/// Numerically stable `ln Σ exp(x_i)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_and_quad_match_direct() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let ch = cholesky(&m, "m").unwrap();
        assert!((chol_logdet(&ch) - 11.0_f64.ln()).abs() < 1e-14);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let direct = (v.transpose() * m.try_inverse().unwrap() * &v)[0];
        assert!((chol_quad(&ch, &v) - direct).abs() < 1e-14);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_sqrt(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-14);
        assert!((&r - r.transpose()).abs().max() < 1e-15);
    }

    #[test]
    fn lse_handles_large_gaps() {
        let v = log_sum_exp([0.0, -800.0]);
        assert_eq!(v, 0.0);
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
    }
}
