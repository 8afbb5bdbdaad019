//! Exact zero-order-hold discretization of `dx = (A_c x + B_c u) dt + G_c dW`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DesignError, Result};
use crate::linalg::symmetrize;

/// Discrete-time matrices for one sampling period.
#[derive(Debug, Clone)]
pub struct Discretized {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Process-noise covariance `D = G Gᵀ` before factorization.
    pub d: DMatrix<f64>,
}

/// Van Loan discretization with a spectral square root of the noise covariance.
pub fn discretize_lti(ac: &DMatrix<f64>, bc: &DMatrix<f64>, gc: &DMatrix<f64>, delta: f64) -> Result<Discretized> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(DesignError::InvalidArgument(format!("sampling period must be positive, got {delta}")));
    }
    let n = ac.nrows();
    if ac.ncols() != n || bc.nrows() != n || gc.nrows() != n {
        return Err(DesignError::Dimension("continuous-time matrices have inconsistent row counts".into()));
    }
    if ac.iter().chain(bc.iter()).chain(gc.iter()).any(|v| !v.is_finite()) {
        return Err(DesignError::InvalidArgument("continuous-time matrices contain non-finite entries".into()));
    }
    let m = bc.ncols();

    let mut drift = DMatrix::zeros(n + m, n + m);
    drift.view_mut((0, 0), (n, n)).copy_from(&(ac * delta));
    drift.view_mut((0, n), (n, m)).copy_from(&(bc * delta));
    let e = drift.exp();
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();

    let mut noise = DMatrix::zeros(2 * n, 2 * n);
    noise.view_mut((0, 0), (n, n)).copy_from(&(-ac * delta));
    noise.view_mut((0, n), (n, n)).copy_from(&(gc * gc.transpose() * delta));
    noise.view_mut((n, n), (n, n)).copy_from(&(ac.transpose() * delta));
    let f = noise.exp();
    let f22t = f.view((n, n), (n, n)).transpose();
    let mut d = &f22t * f.view((0, n), (n, n));
    symmetrize(&mut d);

    let eig = SymmetricEigen::new(d.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-12 * lmax;
    let mut g = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = if l > floor { l.sqrt() } else { 0.0 };
        g.column_mut(j).scale_mut(s);
    }
    Ok(Discretized { a, b, g, d })
}
