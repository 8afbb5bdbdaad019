//! Mutual-information lower bound on the discretized design problem, prior
//! entropy, the information-theoretic error floor and a Monte Carlo MI oracle.

mod gap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::kalman::{dense_moments, log_det_s, pair_distance};
use crate::linalg::{cholesky, ln_normal_pdf, log_sum_exp};
use crate::model::examples::ExampleSetup;
use crate::model::{InputSignal, ParameterPrior, SharedModel, SignalConstraint};
use crate::quadrature::{discretize_prior, DiscretePrior};
use crate::seed::rng_from_seed;

pub use gap::{itb_bcrb_gap_demo, itb_bcrb_gap_gaussian, GapReport, DEFAULT_GAP_GRID};

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Everything the bound needs besides the signal.
#[derive(Clone)]
pub struct MixtureDesignProblem {
    pub model: SharedModel,
    pub dprior: DiscretePrior,
    pub horizon: usize,
    pub constraint: SignalConstraint,
    /// Caller asserts `G` and `S0` do not depend on the input.
    pub fast_path: bool,
    /// Continuous prior the nodes were taken from; its differential entropy
    /// sets the error floor when present.
    pub prior: Option<ParameterPrior>,
}

impl MixtureDesignProblem {
    /// Discretize the example's prior with its default scheme.
    pub fn from_example(ex: &ExampleSetup) -> Result<Self> {
        Ok(MixtureDesignProblem {
            model: ex.model.clone(),
            dprior: discretize_prior(&ex.prior, ex.scheme)?,
            horizon: ex.horizon,
            constraint: ex.constraint.clone(),
            fast_path: ex.fast_path,
            prior: Some(ex.prior.clone()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dprior.validate()?;
        if self.horizon == 0 {
            return Err(DesignError::InvalidArgument("horizon must be at least 1".into()));
        }
        self.constraint.validate()?;
        let len = self.horizon * self.model.dims().input;
        if self.constraint.len() != len {
            return Err(DesignError::Dimension(format!(
                "constraint has length {}, signal has {len}",
                self.constraint.len()
            )));
        }
        if self.dprior.dim() != self.model.dims().theta {
            return Err(DesignError::Dimension("prior dimension does not match model".into()));
        }
        Ok(())
    }

    pub fn n_theta(&self) -> usize {
        self.dprior.dim()
    }

    pub(crate) fn check_signal(&self, u: &InputSignal) -> Result<()> {
        if u.horizon() != self.horizon || u.input_dim != self.model.dims().input {
            return Err(DesignError::Dimension(format!(
                "signal has horizon {} × {}, problem expects {} × {}",
                u.horizon(),
                u.input_dim,
                self.horizon,
                self.model.dims().input
            )));
        }
        Ok(())
    }

    /// Entropy used for the error floor: the continuous prior's differential
    /// entropy when known, otherwise the entropy of the node weights.
    pub fn floor_entropy(&self) -> f64 {
        self.prior
            .as_ref()
            .and_then(|p| p.differential_entropy())
            .unwrap_or_else(|| prior_entropy(&self.dprior.weights))
    }
}

/// Decision record of one bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Lower bound on the mutual information, nats.
    pub i_l: f64,
    /// Entropy of the node weights, nats.
    pub h_theta: f64,
    /// Pairwise distances, nats.
    pub d: Vec<Vec<f64>>,
    /// Minimum achievable mean squared error implied by `i_l`.
    pub itb_floor: f64,
    /// Entropy that entered `itb_floor`, nats.
    pub floor_entropy: f64,
    pub n_theta: usize,
    /// Constraint violation of the evaluated signal; zero when feasible.
    pub constraint_violation: f64,
}

/// `-Σ_i p_i ln Σ_j p_j exp(-d_ij)` in the log domain.
pub fn il_from_distances(weights: &[f64], d: &[Vec<f64>]) -> f64 {
    let lnw: Vec<f64> = weights.iter().map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    -weights
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| p * log_sum_exp((0..weights.len()).map(|j| lnw[j] - d[i][j])))
        .sum::<f64>()
}

/// Two-alternative link `exp(-I_l) = (p1 + p2 e^{-d})^{p1} (p1 e^{-d} + p2)^{p2}`.
pub fn il_from_two_alt(p1: f64, p2: f64, d12: f64) -> f64 {
    let d = vec![vec![0.0, d12], vec![d12, 0.0]];
    il_from_distances(&[p1, p2], &d)
}

/// All pairwise distances in the full three-term form, `i < j` computed in
/// fixed order and mirrored.
pub fn distance_matrix(problem: &MixtureDesignProblem, u: &InputSignal) -> Result<Vec<Vec<f64>>> {
    let r = problem.dprior.len();
    let nodes = &problem.dprior.nodes;
    let model = problem.model.as_ref();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect();
    let vals: Result<Vec<f64>> =
        pairs.par_iter().map(|&(i, j)| pair_distance(model, &nodes[i], &nodes[j], u, false)).collect();
    let vals = vals?;
    let mut d = vec![vec![0.0; r]; r];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        d[i][j] = v;
        d[j][i] = v;
    }
    Ok(d)
}

/// Pairwise-distance lower bound on the mutual information at `U`.
pub fn kt_lower_bound(problem: &MixtureDesignProblem, u: &InputSignal) -> Result<BoundReport> {
    problem.validate()?;
    problem.check_signal(u)?;
    let d = distance_matrix(problem, u)?;
    let h = prior_entropy(&problem.dprior.weights);
    let i_l = il_from_distances(&problem.dprior.weights, &d);
    let fe = problem.floor_entropy();
    Ok(BoundReport {
        i_l,
        h_theta: h,
        itb_floor: itb_floor(fe, i_l, problem.n_theta()),
        floor_entropy: fe,
        d,
        n_theta: problem.n_theta(),
        constraint_violation: problem.constraint.violation(&u.values),
    })
}

/// `d_12(U)` for a two-node prior; only the quadratic term on the fast path.
pub fn two_alt_objective(problem: &MixtureDesignProblem, u: &InputSignal) -> Result<f64> {
    if problem.dprior.len() != 2 {
        return Err(DesignError::InvalidArgument(format!(
            "two-alternative objective needs 2 nodes, got {}",
            problem.dprior.len()
        )));
    }
    problem.check_signal(u)?;
    let n = &problem.dprior.nodes;
    pair_distance(problem.model.as_ref(), &n[0], &n[1], u, problem.fast_path)
}

/// `-Σ p_j ln p_j` with `0 ln 0 = 0`.
pub fn prior_entropy(weights: &[f64]) -> f64 {
    -weights.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `n (2πe)^{-1} exp(2 (H - I) / n)`.
pub fn itb_floor(h_theta: f64, info: f64, n_theta: usize) -> f64 {
    let n = n_theta as f64;
    n / (2.0 * std::f64::consts::PI * std::f64::consts::E) * (2.0 * (h_theta - info) / n).exp()
}

/// `½ Σ_j p_j ln((2πe)^{n_Y} |S_j|)`.
pub fn cond_entropy_y_given_theta(problem: &MixtureDesignProblem, u: &InputSignal) -> Result<f64> {
    problem.check_signal(u)?;
    let n_y = ((problem.horizon + 1) * problem.model.dims().output) as f64;
    let model = problem.model.as_ref();
    let mut h = 0.0;
    for (node, &p) in problem.dprior.nodes.iter().zip(&problem.dprior.weights) {
        if p > 0.0 {
            h += 0.5 * p * (n_y * LN_2PI_E + log_det_s(model, node, u)?);
        }
    }
    Ok(h)
}

pub const MI_MC_MAX_OUTPUT: usize = 32;

/// Monte Carlo estimate of the mixture mutual information with its standard error.
pub fn mi_monte_carlo(problem: &MixtureDesignProblem, u: &InputSignal, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    problem.check_signal(u)?;
    let n_out = (problem.horizon + 1) * problem.model.dims().output;
    if n_out > MI_MC_MAX_OUTPUT {
        return Err(DesignError::GuardExceeded(format!(
            "Monte Carlo MI needs (N+1)·n_y <= {MI_MC_MAX_OUTPUT}, got {n_out}"
        )));
    }
    if n_samples < 2 {
        return Err(DesignError::InvalidArgument("need at least 2 samples".into()));
    }
    let model = problem.model.as_ref();
    let dp = &problem.dprior;
    let mut comps = Vec::with_capacity(dp.len());
    for node in &dp.nodes {
        let dm = dense_moments(model, node, u)?;
        let ch = cholesky(&dm.s, "stacked output covariance")?;
        comps.push((dm.f, ch));
    }
    let lnw: Vec<f64> = dp.weights.iter().map(|w| w.ln()).collect();
    let cat = dp.as_prior();
    let mut rng = rng_from_seed(seed);
    let mut vals = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let theta = cat.sample_with(&mut rng);
        let j = dp.nodes.iter().position(|n| *n == theta).unwrap();
        let z = DVector::from_fn(n_out, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &comps[j].0 + comps[j].1.l() * z;
        let lp = log_sum_exp(comps.iter().zip(&lnw).map(|((f, ch), lw)| lw + ln_normal_pdf(&y, f, ch)));
        vals.push(-lp);
    }
    let n = n_samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let h_y_given = cond_entropy_y_given_theta(problem, u)?;
    Ok((mean - h_y_given, (var / n).sqrt()))
}
