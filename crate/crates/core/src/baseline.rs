//! Classical time-domain averaged D-optimal design for SISO LTI models.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::model::{InputSignal, SharedModel};
use crate::quadrature::DiscretePrior;

/// Stationary one-step predictor quantities.
#[derive(Debug, Clone)]
pub struct StationaryGain {
    pub k: DVector<f64>,
    pub s: DMatrix<f64>,
    /// Innovation variance `C S Cᵀ + σ_v²`.
    pub sigma_e2: f64,
    pub iterations: usize,
}

pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

fn riccati_step(a: &DMatrix<f64>, gg: &DMatrix<f64>, c: &DMatrix<f64>, sv2: f64, s: &DMatrix<f64>) -> DMatrix<f64> {
    let sc = s * c.transpose();
    let denom = (c * &sc)[0] + sv2;
    let asc = a * &sc;
    let mut next = a * s * a.transpose() + gg - &asc * asc.transpose() / denom;
    crate::linalg::symmetrize(&mut next);
    next
}

/// Fixed-point iteration of the predictor Riccati equation from `S = G Gᵀ`,
/// then `K = A S Cᵀ (C S Cᵀ + σ_v²)^{-1}`.
pub fn stationary_kalman_gain(a: &DMatrix<f64>, g: &DMatrix<f64>, c: &DMatrix<f64>, sv2: f64) -> Result<StationaryGain> {
    if c.nrows() != 1 || c.ncols() != a.nrows() || !(sv2 > 0.0) {
        return Err(DesignError::InvalidArgument("stationary gain needs a scalar output and σ_v² > 0".into()));
    }
    let gg = g * g.transpose();
    let mut s = gg.clone();
    for it in 1..=RICCATI_MAX_ITER {
        let next = riccati_step(a, &gg, c, sv2, &s);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(DesignError::NoConvergence("Riccati iteration diverged".into()));
        }
        let diff = (&next - &s).amax();
        s = next;
        if diff < RICCATI_TOL {
            let sc = &s * c.transpose();
            let sigma_e2 = (c * &sc)[0] + sv2;
            return Ok(StationaryGain { k: (a * sc / sigma_e2).column(0).into_owned(), s, sigma_e2, iterations: it });
        }
    }
    Err(DesignError::NoConvergence(format!("Riccati iteration did not converge in {RICCATI_MAX_ITER} steps")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityProvider {
    AnalyticExample1,
    AnalyticExample2,
    AnalyticExample3,
    FiniteDifference,
}

/// A SISO LTI model viewed through its transfer functions.
#[derive(Clone)]
pub struct LtiSisoAdapter {
    pub model: SharedModel,
    /// Indices of the parameters entering the input transfer function.
    pub theta_g: Vec<usize>,
    pub provider: SensitivityProvider,
    /// Needed by the closed-form oscillator filter.
    pub b_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySweep {
    /// `ψ_1 .. ψ_N`, each of length `|θ_G|`.
    pub psi: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

/// `A(θ)`, input vector `B(θ)`, `G(θ)` of an LTI model.
fn lti_matrices(model: &SharedModel, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let m0 = model.step(theta, &[0.0]);
    let m1 = model.step(theta, &[1.0]);
    (m0.a, m1.b - m0.b, m0.g)
}

impl LtiSisoAdapter {
    pub fn new(model: SharedModel, theta_g: Vec<usize>, provider: SensitivityProvider) -> Result<Self> {
        let d = model.dims();
        if d.input != 1 || d.output != 1 {
            return Err(DesignError::InvalidArgument("classical baseline needs a SISO model".into()));
        }
        if theta_g.is_empty() || theta_g.iter().any(|&i| i >= d.theta) {
            return Err(DesignError::InvalidArgument("θ_G indices out of range".into()));
        }
        Ok(LtiSisoAdapter { model, theta_g, provider, b_c: None })
    }

    /// Adapter for a built-in model, with its closed-form sensitivity filter.
    pub fn for_model(model: SharedModel) -> Result<Self> {
        let name = model.name().to_string();
        let (theta_g, provider) = match name.as_str() {
            "example1" => (vec![0, 1], SensitivityProvider::AnalyticExample1),
            "dc_motor" => (vec![0], SensitivityProvider::AnalyticExample2),
            "atomic_oscillator" => (vec![0], SensitivityProvider::AnalyticExample3),
            "opm_reduced" => {
                return Err(DesignError::InvalidArgument(
                    "opm_reduced is not LTI: its matrices depend on the input".into(),
                ))
            }
            _ => ((0..model.dims().theta).collect(), SensitivityProvider::FiniteDifference),
        };
        let mut a = LtiSisoAdapter::new(model, theta_g, provider)?;
        if provider == SensitivityProvider::AnalyticExample3 {
            // recover b_c from B at θ = 0: B = b_c (1 - e^{-Δ}) e_2
            let dt = a.model.sampling_period();
            let (_, b, _) = lti_matrices(&a.model, &[0.0]);
            a.b_c = Some(b[1] / (1.0 - (-dt).exp()));
        }
        Ok(a)
    }

    pub fn stationary(&self, theta: &[f64]) -> Result<StationaryGain> {
        let (a, _, g) = lti_matrices(&self.model, theta);
        stationary_kalman_gain(&a, &g, self.model.c(), self.model.sv()[(0, 0)])
    }
}

/// Filter `D(z) ψ_k = P(z) z^{-1} u_k` with `D_0 = 1` and zero initial conditions.
fn rational_filter(num: &[f64], den: &[f64], u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut psi = vec![0.0; n + 1];
    for k in 1..=n {
        let mut v = 0.0;
        for (i, p) in num.iter().enumerate() {
            if k >= 1 + i {
                v += p * u[k - 1 - i];
            }
        }
        for (i, d) in den.iter().enumerate().skip(1) {
            if k >= i {
                v -= d * psi[k - i];
            }
        }
        psi[k] = v;
    }
    psi.split_off(1)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(∂B·A - B·∂A) / (A·C)` numerator and denominator in powers of `z^{-1}`.
fn second_order_filter(a: [f64; 3], da: [f64; 3], b: [f64; 2], db: [f64; 2], c: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
    let l = poly_mul(&db, &a);
    let r = poly_mul(&b, &da);
    let num = l.iter().zip(&r).map(|(x, y)| x - y).collect();
    (num, poly_mul(&a, &c))
}

fn analytic_example2(model: &SharedModel, theta: f64, k: &DVector<f64>, u: &[f64]) -> Vec<f64> {
    let dt = model.sampling_period();
    let e = (-theta * dt).exp();
    let p = (1.0 - e) / theta;
    let a = [1.0, -(1.0 + e), e];
    let da = [0.0, dt * e, -dt * e];
    let b = [dt - p, p - dt * e];
    let db = [(1.0 - e) / (theta * theta) - dt * e / theta, -(1.0 - e) / (theta * theta) + dt * e / theta + dt * dt * e];
    let c = [1.0, k[0] - 1.0 - e, e * (1.0 - k[0]) + p * k[1]];
    let (num, den) = second_order_filter(a, da, b, db, c);
    rational_filter(&num, &den, u)
}

fn analytic_example3(model: &SharedModel, b_c: f64, theta: f64, k: &DVector<f64>, u: &[f64]) -> Vec<f64> {
    let dt = model.sampling_period();
    let e = (-dt).exp();
    let (s, c) = (theta * dt).sin_cos();
    let q = 1.0 + theta * theta;
    let n1 = theta - e * (theta * c + s);
    let n2 = 1.0 - e * (c - theta * s);
    let dn1 = 1.0 - e * (c - theta * dt * s + dt * c);
    let dn2 = e * (dt * s + s + theta * dt * c);
    let (b1, b2) = (b_c * n1 / q, b_c * n2 / q);
    let db1 = b_c * (dn1 * q - 2.0 * theta * n1) / (q * q);
    let db2 = b_c * (dn2 * q - 2.0 * theta * n2) / (q * q);
    let a = [1.0, -2.0 * e * c, e * e];
    let da = [0.0, 2.0 * e * dt * s, 0.0];
    let b = [b2, -e * (s * b1 + c * b2)];
    let db = [db2, -e * (dt * c * b1 + s * db1 - dt * s * b2 + c * db2)];
    let cc = [1.0, k[1] - 2.0 * e * c, e * (e - k[0] * s - k[1] * c)];
    let (num, den) = second_order_filter(a, da, b, db, cc);
    rational_filter(&num, &den, u)
}

/// Innovations of the stationary predictor driven by the noise-free response at `theta0`.
fn innovations(adapter: &LtiSisoAdapter, theta: &[f64], y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let (a, b, _) = lti_matrices(&adapter.model, theta);
    let k = adapter.stationary(theta)?.k;
    let c = adapter.model.c();
    let mut x = DVector::zeros(a.nrows());
    let mut eps = Vec::with_capacity(y.len());
    for (j, yj) in y.iter().enumerate() {
        let e = yj - (c * &x)[0];
        eps.push(e);
        if j < u.len() {
            x = &a * x + &b * u[j] + &k * e;
        }
    }
    Ok(eps)
}

fn noise_free_response(adapter: &LtiSisoAdapter, theta: &[f64], u: &[f64]) -> Vec<f64> {
    let (a, b, _) = lti_matrices(&adapter.model, theta);
    let c = adapter.model.c();
    let mut x = DVector::zeros(a.nrows());
    let mut y = Vec::with_capacity(u.len() + 1);
    for k in 0..=u.len() {
        y.push((c * &x)[0]);
        if k < u.len() {
            x = &a * x + &b * u[k];
        }
    }
    y
}

/// Prediction-error sensitivities `ψ_k = H^{-1} ∇_{θ_G} G u_k`, `k = 1..N`.
pub fn sensitivity_sweep(adapter: &LtiSisoAdapter, theta: &[f64], u: &InputSignal) -> Result<SensitivitySweep> {
    sweep_with_gain(adapter, theta, None, u)
}

fn sweep_with_gain(
    adapter: &LtiSisoAdapter,
    theta: &[f64],
    gain: Option<&StationaryGain>,
    u: &InputSignal,
) -> Result<SensitivitySweep> {
    let stationary = || match gain {
        Some(g) => Ok(g.clone()),
        None => adapter.stationary(theta),
    };
    if u.input_dim != 1 || theta.len() != adapter.model.dims().theta {
        return Err(DesignError::Dimension("sensitivity sweep needs a scalar signal and full θ".into()));
    }
    let uv = &u.values;
    let n = uv.len();
    let columns: Vec<Vec<f64>> = match adapter.provider {
        SensitivityProvider::AnalyticExample1 => {
            let k = stationary()?.k[0];
            let (t1, t2) = (theta[0], theta[1]);
            let den1 = [1.0, k - 2.0 * t1, -t1 * (k - t1)];
            let psi1 = rational_filter(&[0.0, t2], &den1, uv);
            let psi2 = rational_filter(&[1.0], &[1.0, k - t1], uv);
            adapter.theta_g.iter().map(|&i| if i == 0 { psi1.clone() } else { psi2.clone() }).collect()
        }
        SensitivityProvider::AnalyticExample2 => {
            let k = stationary()?.k;
            vec![analytic_example2(&adapter.model, theta[0], &k, uv)]
        }
        SensitivityProvider::AnalyticExample3 => {
            let k = stationary()?.k;
            let b_c = adapter.b_c.ok_or_else(|| DesignError::InvalidArgument("oscillator filter needs b_c".into()))?;
            vec![analytic_example3(&adapter.model, b_c, theta[0], &k, uv)]
        }
        SensitivityProvider::FiniteDifference => {
            let y = noise_free_response(adapter, theta, uv);
            adapter
                .theta_g
                .iter()
                .map(|&i| {
                    let delta = 1e-5 * (1.0 + theta[i].abs());
                    let mut tp = theta.to_vec();
                    tp[i] += delta;
                    let ep = innovations(adapter, &tp, &y, uv)?;
                    tp[i] = theta[i] - delta;
                    let em = innovations(adapter, &tp, &y, uv)?;
                    Ok((1..=n).map(|k| -(ep[k] - em[k]) / (2.0 * delta)).collect())
                })
                .collect::<Result<_>>()?
        }
    };
    let psi: Vec<Vec<f64>> = (0..n).map(|k| columns.iter().map(|c| c[k]).collect()).collect();
    if psi.iter().flatten().any(|v| !v.is_finite() || v.abs() > 1e12) {
        return Err(DesignError::Numerical(format!("unstable sensitivity filter at θ = {theta:?}")));
    }
    Ok(SensitivitySweep { psi, theta: theta.to_vec() })
}

/// `Σ_j p_j det((1/(N σ_e²)) Σ_k ψ_k ψ_kᵀ)` without the input-independent term.
pub fn avg_d_optimal_criterion(adapter: &LtiSisoAdapter, dprior: &DiscretePrior, u: &InputSignal) -> Result<f64> {
    let gains = node_gains(adapter, dprior)?;
    avg_d_optimal_with_gains(adapter, dprior, &gains, u)
}

/// Stationary predictor at every node, for reuse across signals.
pub fn node_gains(adapter: &LtiSisoAdapter, dprior: &DiscretePrior) -> Result<Vec<StationaryGain>> {
    dprior.nodes.par_iter().map(|t| adapter.stationary(t)).collect()
}

/// Criterion with the stationary gains computed beforehand by [`node_gains`].
pub fn avg_d_optimal_with_gains(
    adapter: &LtiSisoAdapter,
    dprior: &DiscretePrior,
    gains: &[StationaryGain],
    u: &InputSignal,
) -> Result<f64> {
    if gains.len() != dprior.len() {
        return Err(DesignError::Dimension("one stationary gain per node required".into()));
    }
    let n = u.horizon() as f64;
    let terms: Vec<f64> = dprior
        .nodes
        .par_iter()
        .zip(dprior.weights.par_iter())
        .zip(gains.par_iter())
        .map(|((theta, &p), gain)| {
            let sw = sweep_with_gain(adapter, theta, Some(gain), u)?;
            let sigma_e2 = gain.sigma_e2;
            let m = adapter.theta_g.len();
            let mut gram = DMatrix::zeros(m, m);
            for psi in &sw.psi {
                let v = DVector::from_column_slice(psi);
                gram += &v * v.transpose();
            }
            Ok(p * (gram / (n * sigma_e2)).determinant())
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}
