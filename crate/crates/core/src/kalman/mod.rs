//! Kalman recursions for the log-likelihood, the log-determinant of the stacked
//! output covariance and the pairwise mixture distance.
//!
//! Every sweep performs `N + 1` corrections and `N` predictions; the input
//! `u_N` is never needed.

mod dense;
pub(crate) mod recursion;

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::linalg::{chol_logdet, chol_quad, cholesky_with, symmetrize};
use crate::model::{InputSignal, ParameterPrior, QuasiLinearModel};

pub use dense::{dense_moments, DenseMoments, DENSE_MAX_HORIZON};
pub(crate) use recursion::{fd_tails, run, CovSweep, FastPair, FastPairCache, PairRecursion, Recursion};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-step record of one filtering pass.
#[derive(Debug, Clone)]
pub struct KalmanSweep {
    /// Predicted output means `C m_k^-`.
    pub predicted_outputs: Vec<DVector<f64>>,
    /// Innovation covariances `Σ_k`.
    pub innovation_covs: Vec<DMatrix<f64>>,
    /// `ln|Σ_k|` per step.
    pub step_log_dets: Vec<f64>,
    /// `|y_k - C m_k^-|²_{Σ_k^{-1}}` per step; empty without observations.
    pub step_quads: Vec<f64>,
    pub log_det: f64,
    pub quad: Option<f64>,
    pub final_mean: DVector<f64>,
    pub final_cov: DMatrix<f64>,
}

impl KalmanSweep {
    /// `ln p(Y | θ, U)`; requires observations.
    pub fn log_likelihood(&self) -> Option<f64> {
        let ny = self.predicted_outputs.first().map_or(0, |v| v.len());
        self.quad.map(|q| -0.5 * (q + self.log_det + (self.predicted_outputs.len() * ny) as f64 * LN_2PI))
    }
}

pub(crate) fn check_dims(model: &dyn QuasiLinearModel, theta: &[f64], u: &InputSignal) -> Result<()> {
    let d = model.dims();
    if theta.len() != d.theta {
        return Err(DesignError::Dimension(format!("θ has length {}, model expects {}", theta.len(), d.theta)));
    }
    if u.input_dim != d.input {
        return Err(DesignError::Dimension(format!(
            "signal input dimension {} does not match model input dimension {}",
            u.input_dim, d.input
        )));
    }
    Ok(())
}

/// Run the filter over `U`, optionally conditioning on stacked observations `Y`.
pub fn kalman_sweep(
    model: &dyn QuasiLinearModel,
    theta: &[f64],
    y: Option<&[f64]>,
    u: &InputSignal,
) -> Result<KalmanSweep> {
    check_dims(model, theta, u)?;
    let ny = model.dims().output;
    let n_steps = u.horizon();
    if let Some(y) = y {
        if y.len() != (n_steps + 1) * ny {
            return Err(DesignError::Dimension(format!(
                "observations have length {}, expected {} = (N+1)·n_y",
                y.len(),
                (n_steps + 1) * ny
            )));
        }
    }
    let c = model.c();
    let sv = model.sv();
    let mut m = model.m0(theta);
    let mut s = model.s0(theta);
    let mut out = KalmanSweep {
        predicted_outputs: Vec::with_capacity(n_steps + 1),
        innovation_covs: Vec::with_capacity(n_steps + 1),
        step_log_dets: Vec::with_capacity(n_steps + 1),
        step_quads: Vec::new(),
        log_det: 0.0,
        quad: y.map(|_| 0.0),
        final_mean: DVector::zeros(0),
        final_cov: DMatrix::zeros(0, 0),
    };
    for k in 0..=n_steps {
        let mut sigma = sv + c * &s * c.transpose();
        symmetrize(&mut sigma);
        let ch = cholesky_with(&sigma, || format!("innovation covariance at step {k}, θ = {theta:?}"))?;
        let cs = c * &s;
        let gain = ch.solve(&cs).transpose();
        let pred = c * &m;
        let ld = chol_logdet(&ch);
        out.log_det += ld;
        out.step_log_dets.push(ld);
        if let Some(y) = y {
            let innov = DVector::from_column_slice(&y[k * ny..(k + 1) * ny]) - &pred;
            let q = chol_quad(&ch, &innov);
            out.step_quads.push(q);
            *out.quad.as_mut().unwrap() += q;
            m += &gain * innov;
        }
        s -= &gain * &sigma * gain.transpose();
        symmetrize(&mut s);
        out.predicted_outputs.push(pred);
        out.innovation_covs.push(sigma);
        if k < n_steps {
            let st = model.step(theta, u.at(k));
            m = &st.a * &m + &st.b;
            s = &st.a * &s * st.a.transpose() + &st.g * st.g.transpose();
            symmetrize(&mut s);
        }
    }
    out.final_mean = m;
    out.final_cov = s;
    Ok(out)
}

/// `(Σ quad, Σ ln|Σ_k|)` without recording the per-step quantities.
fn innovation_terms(model: &dyn QuasiLinearModel, theta: &[f64], y: &[f64], u: &InputSignal) -> Result<(f64, f64)> {
    check_dims(model, theta, u)?;
    let ny = model.dims().output;
    let n_steps = u.horizon();
    if y.len() != (n_steps + 1) * ny {
        return Err(DesignError::Dimension(format!(
            "observations have length {}, expected {} = (N+1)·n_y",
            y.len(),
            (n_steps + 1) * ny
        )));
    }
    let c = model.c();
    let ct = c.transpose();
    let sv = model.sv();
    let n = model.dims().state;
    let mut m = model.m0(theta);
    let mut s = model.s0(theta);
    let mut cs = DMatrix::zeros(ny, n);
    let mut work = DMatrix::zeros(n, n);
    let mut mtmp = DVector::zeros(n);
    let (mut quad, mut log_det) = (0.0, 0.0);
    for k in 0..=n_steps {
        cs.gemm(1.0, c, &s, 0.0);
        let yk = &y[k * ny..(k + 1) * ny];
        if ny == 1 {
            let sigma = sv[(0, 0)] + cs.row(0).dot(&c.row(0));
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(DesignError::NotPositiveDefinite(format!(
                    "innovation covariance at step {k}, θ = {theta:?}"
                )));
            }
            let e = yk[0] - c.row(0).dot(&m.transpose());
            quad += e * e / sigma;
            log_det += sigma.ln();
            let g = cs.row(0).transpose();
            m.axpy(e / sigma, &g, 1.0);
            s.ger(-1.0 / sigma, &g, &g, 1.0);
        } else {
            let mut sigma = sv + &cs * &ct;
            symmetrize(&mut sigma);
            let ch = cholesky_with(&sigma, || format!("innovation covariance at step {k}, θ = {theta:?}"))?;
            let innov = DVector::from_column_slice(yk) - c * &m;
            quad += chol_quad(&ch, &innov);
            log_det += chol_logdet(&ch);
            let gain = ch.solve(&cs).transpose();
            m += &gain * innov;
            s -= &gain * &cs;
        }
        symmetrize(&mut s);
        if k < n_steps {
            let st = model.step(theta, u.at(k));
            mtmp.gemv(1.0, &st.a, &m, 0.0);
            mtmp += &st.b;
            std::mem::swap(&mut m, &mut mtmp);
            work.gemm(1.0, &st.a, &s, 0.0);
            s.gemm(1.0, &work, &st.a.transpose(), 0.0);
            s.gemm(1.0, &st.g, &st.g.transpose(), 1.0);
            symmetrize(&mut s);
        }
    }
    Ok((quad, log_det))
}

/// `ln p(Y | θ, U)` by the Kalman recursion.
pub fn log_likelihood(model: &dyn QuasiLinearModel, theta: &[f64], y: &[f64], u: &InputSignal) -> Result<f64> {
    let (quad, log_det) = innovation_terms(model, theta, y, u)?;
    Ok(-0.5 * (quad + log_det + y.len() as f64 * LN_2PI))
}

/// `½ Σ (|y_k - C m_k^-|²_{Σ_k^{-1}} + ln|Σ_k|) - ln p0(θ)`.
pub fn neg_log_posterior(
    model: &dyn QuasiLinearModel,
    prior: &ParameterPrior,
    theta: &[f64],
    y: &[f64],
    u: &InputSignal,
) -> Result<f64> {
    let lp = prior.ln_pdf(theta).filter(|v| v.is_finite());
    let Some(lp) = lp else {
        return Err(DesignError::OutOfSupport { theta: theta.to_vec() });
    };
    let (quad, log_det) = innovation_terms(model, theta, y, u)?;
    Ok(0.5 * (quad + log_det) - lp)
}

/// `ln|S(θ, U)| = Σ_k ln|Σ_k|` without observations.
pub fn log_det_s(model: &dyn QuasiLinearModel, theta: &[f64], u: &InputSignal) -> Result<f64> {
    check_dims(model, theta, u)?;
    let r = CovSweep::new(model, theta);
    let st = recursion::run(&r, u)?;
    Ok(st.log_det)
}

/// Per-step record of the augmented pair sweep.
#[derive(Debug, Clone)]
pub struct PairSweep {
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub innovation_covs: Vec<DMatrix<f64>>,
    /// `¼ Σ |C̃ m̃_k^-|²_{Σ̃_k^{-1}}`
    pub quad_term: f64,
    /// `½ Σ ln|Σ̃_k|`
    pub log_det_term: f64,
}

/// Run the augmented pair recursion for `(θ_i, θ_j)` and keep every step.
pub fn pair_sweep(model: &dyn QuasiLinearModel, ti: &[f64], tj: &[f64], u: &InputSignal) -> Result<PairSweep> {
    check_dims(model, ti, u)?;
    check_dims(model, tj, u)?;
    let r = PairRecursion::new(model, ti, tj);
    let mut st = r.start()?;
    let n_steps = u.horizon();
    let mut out = PairSweep {
        predicted_means: Vec::with_capacity(n_steps + 1),
        predicted_covs: Vec::with_capacity(n_steps + 1),
        innovation_covs: Vec::with_capacity(n_steps + 1),
        quad_term: 0.0,
        log_det_term: 0.0,
    };
    for k in 0..=n_steps {
        out.predicted_means.push(st.m.clone());
        out.predicted_covs.push(st.s.clone());
        let sigma = r.correct_record(&mut st, k)?;
        out.innovation_covs.push(sigma);
        if k < n_steps {
            r.predict(&mut st, k, u.at(k));
        }
    }
    out.quad_term = 0.25 * st.quad;
    out.log_det_term = 0.5 * st.log_det;
    Ok(out)
}

/// Pairwise distance `d_ij`. With `fast` only the quadratic term is returned,
/// which is exact up to a `U`-independent constant when `G` and `S0` do not
/// depend on the input.
pub fn pair_distance(
    model: &dyn QuasiLinearModel,
    ti: &[f64],
    tj: &[f64],
    u: &InputSignal,
    fast: bool,
) -> Result<f64> {
    check_dims(model, ti, u)?;
    check_dims(model, tj, u)?;
    let r = PairRecursion::new(model, ti, tj);
    let st = recursion::run(&r, u)?;
    if fast {
        return Ok(0.25 * st.quad);
    }
    let li = log_det_s(model, ti, u)?;
    let lj = log_det_s(model, tj, u)?;
    Ok(0.25 * st.quad + 0.5 * st.log_det - 0.25 * (li + lj))
}
