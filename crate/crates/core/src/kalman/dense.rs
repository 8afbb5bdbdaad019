//! Stacked-output moments built from transition products, for verification.

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::linalg::{chol_logdet, cholesky, ln_normal_pdf};
use crate::model::{InputSignal, QuasiLinearModel};

pub const DENSE_MAX_HORIZON: usize = 64;

/// Mean and covariance of `Y = col(y_0, ..., y_N)`.
#[derive(Debug, Clone)]
pub struct DenseMoments {
    pub f: DVector<f64>,
    pub s: DMatrix<f64>,
}

impl DenseMoments {
    pub fn log_det(&self) -> Result<f64> {
        Ok(chol_logdet(&cholesky(&self.s, "stacked output covariance")?))
    }

    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        let ch = cholesky(&self.s, "stacked output covariance")?;
        Ok(ln_normal_pdf(&DVector::from_column_slice(y), &self.f, &ch))
    }
}

/// `F = 𝒞(𝒜 m0 + ℬ)` and `S = 𝒞(𝒜 S0 𝒜ᵀ + 𝒢𝒢ᵀ)𝒞ᵀ + I ⊗ S_v`.
pub fn dense_moments(model: &dyn QuasiLinearModel, theta: &[f64], u: &InputSignal) -> Result<DenseMoments> {
    super::check_dims(model, theta, u)?;
    let n_steps = u.horizon();
    if n_steps > DENSE_MAX_HORIZON {
        return Err(DesignError::GuardExceeded(format!(
            "dense moments need N <= {DENSE_MAX_HORIZON}, got {n_steps}"
        )));
    }
    let d = model.dims();
    let (n, ny) = (d.state, d.output);
    let steps: Vec<_> = (0..n_steps).map(|k| model.step(theta, u.at(k))).collect();
    let nw: Vec<usize> = steps.iter().map(|s| s.g.ncols()).collect();
    let w_off: Vec<usize> = nw.iter().scan(0, |acc, &w| { let o = *acc; *acc += w; Some(o) }).collect();
    let total_w: usize = nw.iter().sum();

    // phi(k, j) = A_{k-1} ... A_j, with phi(k, k) = I.
    let phi = |k: usize, j: usize| -> DMatrix<f64> {
        let mut p = DMatrix::identity(n, n);
        for s in &steps[j..k] {
            p = &s.a * p;
        }
        p
    };

    let rows = (n_steps + 1) * n;
    let mut big_a = DMatrix::zeros(rows, n);
    let mut big_b = DVector::zeros(rows);
    let mut big_g = DMatrix::zeros(rows, total_w);
    for k in 0..=n_steps {
        big_a.view_mut((k * n, 0), (n, n)).copy_from(&phi(k, 0));
        for j in 0..k {
            let p = phi(k, j + 1);
            let contrib = &p * &steps[j].b;
            let mut seg = big_b.rows_mut(k * n, n);
            seg += contrib;
            big_g.view_mut((k * n, w_off[j]), (n, nw[j])).copy_from(&(&p * &steps[j].g));
        }
    }
    let mut big_c = DMatrix::zeros((n_steps + 1) * ny, rows);
    for k in 0..=n_steps {
        big_c.view_mut((k * ny, k * n), (ny, n)).copy_from(model.c());
    }
    let f = &big_c * (&big_a * model.m0(theta) + big_b);
    let state_cov = &big_a * model.s0(theta) * big_a.transpose() + &big_g * big_g.transpose();
    let mut s = &big_c * state_cov * big_c.transpose();
    for k in 0..=n_steps {
        let mut blk = s.view_mut((k * ny, k * ny), (ny, ny));
        blk += model.sv();
    }
    Ok(DenseMoments { f, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnModel, ModelDims};

    fn frozen() -> FnModel {
        FnModel {
            dims: ModelDims { state: 2, noise: 1, output: 1, input: 1, theta: 1 },
            a: Box::new(|_, _| DMatrix::identity(2, 2)),
            b: Box::new(|_, _| DVector::zeros(2)),
            g: Box::new(|_, _| DMatrix::zeros(2, 1)),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            sv: DMatrix::from_element(1, 1, 0.5),
            m0: Box::new(|t| DVector::from_column_slice(&[t[0], 1.0])),
            s0: Box::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0])),
        }
    }

    #[test]
    fn frozen_state() {
        let m = frozen();
        let d = dense_moments(&m, &[3.0], &InputSignal::scalar(vec![1.0; 3])).unwrap();
        assert!(d.f.iter().all(|&v| (v - 5.0).abs() < 1e-14));
        // C S0 Cᵀ = 1 + 0.8 + 8 = 9.8
        assert!((d.s[(0, 0)] - 10.3).abs() < 1e-12);
        assert!((d.s[(0, 1)] - 9.8).abs() < 1e-12);
        assert!((d.s[(2, 3)] - 9.8).abs() < 1e-12);
    }

    #[test]
    fn guard() {
        let m = frozen();
        assert!(matches!(
            dense_moments(&m, &[0.0], &InputSignal::scalar(vec![0.0; 65])),
            Err(DesignError::GuardExceeded(_))
        ));
    }
}
