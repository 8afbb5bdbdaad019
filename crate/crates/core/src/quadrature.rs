//! Quadrature discretization of continuous priors into weighted node sets.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::linalg::sym_sqrt;
use crate::model::ParameterPrior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GaussHermite2n,
    GaussLegendre2,
    GaussHermiteP,
    UserSupplied,
}

/// A finite prior `Σ_j p_j δ(θ - θ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePrior {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl DiscretePrior {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let d = DiscretePrior { nodes, weights, provenance: Provenance::UserSupplied };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.len())
    }

    pub fn validate(&self) -> Result<()> {
        ParameterPrior::Discrete { nodes: self.nodes.clone(), weights: self.weights.clone() }.validate()
    }

    pub fn as_prior(&self) -> ParameterPrior {
        ParameterPrior::Discrete { nodes: self.nodes.clone(), weights: self.weights.clone() }
    }
}

/// Discretization rule selector. Parses from `sigma_2n`, `gl_2` or `gh:p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Sigma2n,
    Gl2,
    Gh(usize),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Sigma2n => write!(f, "sigma_2n"),
            Scheme::Gl2 => write!(f, "gl_2"),
            Scheme::Gh(p) => write!(f, "gh:{p}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = DesignError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma_2n" => Ok(Scheme::Sigma2n),
            "gl_2" => Ok(Scheme::Gl2),
            _ => s
                .strip_prefix("gh:")
                .and_then(|p| p.parse().ok())
                .map(Scheme::Gh)
                .ok_or_else(|| DesignError::InvalidArgument(format!("unknown discretization scheme `{s}`"))),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The `2 n_θ` sigma-point rule `m ± √n_θ S^{1/2} e_i`, equal weights.
pub fn gh_sigma_nodes(mean: &[f64], cov: &DMatrix<f64>) -> Result<DiscretePrior> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(DesignError::Dimension("prior mean and covariance disagree".into()));
    }
    crate::linalg::cholesky(cov, "prior covariance")?;
    let root = sym_sqrt(cov)? * (n as f64).sqrt();
    let m = DVector::from_column_slice(mean);
    let mut nodes = Vec::with_capacity(2 * n);
    for i in 0..n {
        let col = root.column(i);
        nodes.push((&m - col).iter().cloned().collect());
        nodes.push((&m + col).iter().cloned().collect());
    }
    Ok(DiscretePrior { nodes, weights: vec![1.0 / (2 * n) as f64; 2 * n], provenance: Provenance::GaussHermite2n })
}

/// Two-point Gauss-Legendre rule on `[a, b]`.
pub fn gl_two_point(a: f64, b: f64) -> Result<DiscretePrior> {
    if !(a < b) {
        return Err(DesignError::InvalidArgument(format!("need a < b, got [{a}, {b}]")));
    }
    let h = (b - a) / 3f64.sqrt();
    Ok(DiscretePrior {
        nodes: vec![vec![(a + b - h) / 2.0], vec![(a + b + h) / 2.0]],
        weights: vec![0.5, 0.5],
        provenance: Provenance::GaussLegendre2,
    })
}

pub const MAX_GH_ORDER: usize = 64;

/// Order-`p` Gauss-Hermite rule for `N(m, σ²)` via the Golub-Welsch eigenproblem.
pub fn gh_scalar(p: usize, m: f64, sigma: f64) -> Result<DiscretePrior> {
    if p == 0 || p > MAX_GH_ORDER {
        return Err(DesignError::InvalidArgument(format!("Gauss-Hermite order must be in 1..={MAX_GH_ORDER}, got {p}")));
    }
    if !(sigma > 0.0) {
        return Err(DesignError::InvalidArgument("Gauss-Hermite stddev must be positive".into()));
    }
    let jac = DMatrix::from_fn(p, p, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> =
        (0..p).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize so odd moments vanish to rounding.
    for i in 0..p / 2 {
        let x = 0.5 * (pairs[p - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[p - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[p - 1 - i] = (x, w);
    }
    if p % 2 == 1 {
        pairs[p / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|q| q.1).sum();
    Ok(DiscretePrior {
        nodes: pairs.iter().map(|q| vec![m + sigma * q.0]).collect(),
        weights: pairs.iter().map(|q| q.1 / total).collect(),
        provenance: Provenance::GaussHermiteP,
    })
}

/// Route a continuous prior to the requested rule; discrete priors pass through.
pub fn discretize_prior(prior: &ParameterPrior, scheme: Scheme) -> Result<DiscretePrior> {
    prior.validate()?;
    let mismatch = || DesignError::IncompatibleScheme { scheme: scheme.to_string(), prior: prior.kind_name().into() };
    match (prior, scheme) {
        (ParameterPrior::Discrete { nodes, weights }, _) => Ok(DiscretePrior {
            nodes: nodes.clone(),
            weights: weights.clone(),
            provenance: Provenance::UserSupplied,
        }),
        (ParameterPrior::Gaussian { mean, .. }, Scheme::Sigma2n) => gh_sigma_nodes(mean, &prior.cov_matrix().unwrap()),
        (ParameterPrior::Gaussian { mean, cov }, Scheme::Gh(p)) if mean.len() == 1 => gh_scalar(p, mean[0], cov[0][0].sqrt()),
        (ParameterPrior::UniformBox { lower, upper }, Scheme::Gl2) if lower.len() == 1 => gl_two_point(lower[0], upper[0]),
        _ => Err(mismatch()),
    }
}
