use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::linalg::{cholesky, ln_normal_pdf, sym_sqrt};
use crate::seed::rng_from_seed;

/// Prior law of the unknown parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterPrior {
    Discrete { nodes: Vec<Vec<f64>>, weights: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl ParameterPrior {
    pub fn gaussian_scalar(mean: f64, variance: f64) -> Self {
        ParameterPrior::Gaussian { mean: vec![mean], cov: vec![vec![variance]] }
    }

    pub fn uniform_scalar(a: f64, b: f64) -> Self {
        ParameterPrior::UniformBox { lower: vec![a], upper: vec![b] }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterPrior::Discrete { nodes, .. } => nodes.first().map_or(0, |n| n.len()),
            ParameterPrior::Gaussian { mean, .. } => mean.len(),
            ParameterPrior::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ParameterPrior::Discrete { .. } => "discrete",
            ParameterPrior::Gaussian { .. } => "gaussian",
            ParameterPrior::UniformBox { .. } => "uniform_box",
        }
    }

    pub fn cov_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            ParameterPrior::Gaussian { cov, .. } => {
                let n = cov.len();
                Some(DMatrix::from_fn(n, n, |i, j| cov[i][j]))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DesignError::InvalidArgument(m.to_string()));
        match self {
            ParameterPrior::Discrete { nodes, weights } => {
                if nodes.is_empty() || nodes.len() != weights.len() {
                    return bad("discrete prior needs one weight per node");
                }
                let d = nodes[0].len();
                if d == 0 || nodes.iter().any(|n| n.len() != d) {
                    return bad("discrete prior nodes must share one nonzero dimension");
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return bad("discrete prior weights must be nonnegative");
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("discrete prior weights must sum to 1");
                }
                for i in 0..nodes.len() {
                    for j in (i + 1)..nodes.len() {
                        if nodes[i] == nodes[j] {
                            return bad("discrete prior nodes must be pairwise distinct");
                        }
                    }
                }
                Ok(())
            }
            ParameterPrior::Gaussian { mean, cov } => {
                if mean.is_empty() || cov.len() != mean.len() || cov.iter().any(|r| r.len() != mean.len()) {
                    return bad("gaussian prior covariance must be square and match the mean");
                }
                let s = self.cov_matrix().unwrap();
                if (&s - s.transpose()).abs().max() > 1e-12 * s.abs().max().max(1.0) {
                    return bad("gaussian prior covariance must be symmetric");
                }
                cholesky(&s, "prior covariance").map(|_| ())
            }
            ParameterPrior::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("uniform box bounds must have equal nonzero length");
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return bad("uniform box needs finite lower < upper componentwise");
                }
                Ok(())
            }
        }
    }

    /// `ln p0(θ)`, or `None` when θ is outside the support.
    pub fn ln_pdf(&self, theta: &[f64]) -> Option<f64> {
        match self {
            ParameterPrior::Discrete { nodes, weights } => nodes
                .iter()
                .zip(weights)
                .find(|(n, _)| n.iter().zip(theta).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0)))
                .and_then(|(_, &w)| (w > 0.0).then(|| w.ln())),
            ParameterPrior::Gaussian { mean, .. } => {
                let s = self.cov_matrix().unwrap();
                let ch = cholesky(&s, "prior covariance").ok()?;
                Some(ln_normal_pdf(
                    &DVector::from_column_slice(theta),
                    &DVector::from_column_slice(mean),
                    &ch,
                ))
            }
            ParameterPrior::UniformBox { lower, upper } => {
                let inside = theta.iter().zip(lower.iter().zip(upper)).all(|(t, (a, b))| t >= a && t <= b);
                inside.then(|| -lower.iter().zip(upper).map(|(a, b)| (b - a).ln()).sum::<f64>())
            }
        }
    }

    /// Differential entropy in nats of a continuous prior; `None` for discrete priors.
    pub fn differential_entropy(&self) -> Option<f64> {
        match self {
            ParameterPrior::Discrete { .. } => None,
            ParameterPrior::Gaussian { mean, .. } => {
                let ch = cholesky(&self.cov_matrix().unwrap(), "prior covariance").ok()?;
                let n = mean.len() as f64;
                Some(0.5 * (n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + crate::linalg::chol_logdet(&ch)))
            }
            ParameterPrior::UniformBox { lower, upper } => {
                Some(lower.iter().zip(upper).map(|(a, b)| (b - a).ln()).sum())
            }
        }
    }

    /// Mean of the prior.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            ParameterPrior::Discrete { nodes, weights } => {
                let d = nodes[0].len();
                (0..d).map(|i| nodes.iter().zip(weights).map(|(n, w)| w * n[i]).sum()).collect()
            }
            ParameterPrior::Gaussian { mean, .. } => mean.clone(),
            ParameterPrior::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ParameterPrior::Discrete { nodes, weights } => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (n, w) in nodes.iter().zip(weights) {
                    acc += w;
                    if r < acc {
                        return n.clone();
                    }
                }
                // roundoff at the top end: last node with positive weight
                let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                nodes[last].clone()
            }
            ParameterPrior::Gaussian { mean, .. } => {
                let root = sym_sqrt(&self.cov_matrix().unwrap()).expect("validated covariance");
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = DVector::from_column_slice(mean) + root * z;
                x.iter().cloned().collect()
            }
            ParameterPrior::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
        }
    }
}

/// Draw one parameter vector from `prior` using a generator seeded by `seed`.
pub fn sample_prior(prior: &ParameterPrior, seed: u64) -> Result<Vec<f64>> {
    prior.validate()?;
    Ok(prior.sample_with(&mut rng_from_seed(seed)))
}
