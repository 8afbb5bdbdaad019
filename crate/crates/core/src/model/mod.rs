//! Quasi-linear state-space models, input signals, constraints and simulation.
//!
//! A model is `x_{k+1} = A(θ,u_k) x_k + B(θ,u_k) + G(θ,u_k) w_k`,
//! `y_k = C x_k + v_k` with `w_k ~ N(0, I)`, `v_k ~ N(0, S_v)` and
//! `x_0 ~ N(m0(θ), S0(θ))`. `B` is the full additive drift, so linear
//! time-invariant models fold their input matrix into it.

mod discretize;
pub mod examples;
mod prior;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::linalg::cholesky;
use crate::seed::rng_from_seed;

pub use discretize::{discretize_lti, Discretized};
pub use prior::{sample_prior, ParameterPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub state: usize,
    pub noise: usize,
    pub output: usize,
    pub input: usize,
    pub theta: usize,
}

/// System matrices for one control step.
#[derive(Debug, Clone)]
pub struct StepMatrices {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
}

/// The model family consumed by every filter, bound and estimator.
///
/// Implementations must be immutable; they are shared across worker threads.
pub trait QuasiLinearModel: Send + Sync {
    fn name(&self) -> &str {
        "custom"
    }
    fn dims(&self) -> ModelDims;
    /// `A(θ,u)`, `B(θ,u)` and `G(θ,u)` evaluated together so implementations
    /// can share trigonometric and exponential subexpressions.
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices;
    fn c(&self) -> &DMatrix<f64>;
    fn sv(&self) -> &DMatrix<f64>;
    fn m0(&self, theta: &[f64]) -> DVector<f64>;
    fn s0(&self, theta: &[f64]) -> DMatrix<f64>;
    /// Sampling period in the model's time unit.
    fn sampling_period(&self) -> f64 {
        1.0
    }
    /// Natural (angular) frequency of the dynamics at θ, when the model has one.
    fn natural_frequency(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

pub type SharedModel = Arc<dyn QuasiLinearModel>;

type MatFn = Box<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
type VecFn = Box<dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync>;
type ThetaVecFn = Box<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type ThetaMatFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A model assembled from closures; the usual way to describe a custom system.
pub struct FnModel {
    pub dims: ModelDims,
    pub a: MatFn,
    pub b: VecFn,
    pub g: MatFn,
    pub c: DMatrix<f64>,
    pub sv: DMatrix<f64>,
    pub m0: ThetaVecFn,
    pub s0: ThetaMatFn,
}

impl QuasiLinearModel for FnModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        StepMatrices { a: (self.a)(theta, u), b: (self.b)(theta, u), g: (self.g)(theta, u) }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, theta: &[f64]) -> DVector<f64> {
        (self.m0)(theta)
    }
    fn s0(&self, theta: &[f64]) -> DMatrix<f64> {
        (self.s0)(theta)
    }
}

/// Check that `S_v` and `S0(θ)` are symmetric positive definite.
pub fn check_model_at(model: &dyn QuasiLinearModel, theta: &[f64]) -> Result<()> {
    let d = model.dims();
    if theta.len() != d.theta {
        return Err(DesignError::Dimension(format!(
            "θ has length {}, model expects {}",
            theta.len(),
            d.theta
        )));
    }
    cholesky(model.sv(), "measurement noise covariance S_v")?;
    cholesky(&model.s0(theta), &format!("initial covariance S0 at θ = {theta:?}"))?;
    Ok(())
}

/// Stacked piecewise-constant control `U = col(u_0, ..., u_{N-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub input_dim: usize,
    pub values: Vec<f64>,
}

impl InputSignal {
    pub fn new(input_dim: usize, values: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || values.len() % input_dim != 0 {
            return Err(DesignError::Dimension(format!(
                "signal length {} is not a multiple of input dimension {input_dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::InvalidArgument("signal has non-finite entries".into()));
        }
        Ok(InputSignal { input_dim, values })
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        InputSignal { input_dim: 1, values }
    }

    pub fn zeros(horizon: usize, input_dim: usize) -> Self {
        InputSignal { input_dim, values: vec![0.0; horizon * input_dim] }
    }

    pub fn horizon(&self) -> usize {
        self.values.len() / self.input_dim
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Admissible signal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalConstraint {
    /// `|U - center| <= radius`
    Ball { center: Vec<f64>, radius: f64 },
    /// `lower <= U <= upper` componentwise
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl SignalConstraint {
    pub fn ball_at_origin(len: usize, radius: f64) -> Self {
        SignalConstraint::Ball { center: vec![0.0; len], radius }
    }

    pub fn uniform_box(len: usize, lower: f64, upper: f64) -> Self {
        SignalConstraint::Box { lower: vec![lower; len], upper: vec![upper; len] }
    }

    pub fn len(&self) -> usize {
        match self {
            SignalConstraint::Ball { center, .. } => center.len(),
            SignalConstraint::Box { lower, .. } => lower.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SignalConstraint::Ball { radius, .. } if !(*radius > 0.0) => {
                Err(DesignError::InvalidArgument("ball radius must be positive".into()))
            }
            SignalConstraint::Box { lower, upper } if lower.len() != upper.len() => {
                Err(DesignError::Dimension("box bounds differ in length".into()))
            }
            SignalConstraint::Box { lower, upper } if lower.iter().zip(upper).any(|(a, b)| !(a <= b)) => {
                Err(DesignError::InvalidArgument("box bounds must satisfy lower <= upper".into()))
            }
            _ => Ok(()),
        }
    }

    /// Constraint violation; zero when feasible.
    pub fn violation(&self, u: &[f64]) -> f64 {
        match self {
            SignalConstraint::Ball { center, radius } => {
                let d = u.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (d - radius).max(0.0)
            }
            SignalConstraint::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (a, b))| (a - x).max(x - b).max(0.0))
                .fold(0.0, f64::max),
        }
    }
}

/// Simulated states and outputs, `N + 1` of each.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub theta: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    /// Outputs stacked into `Y = col(y_0, ..., y_N)`.
    pub fn stacked_outputs(&self) -> Vec<f64> {
        self.outputs.iter().flat_map(|y| y.iter().cloned()).collect()
    }
}

/// Draw one trajectory of the model under input `u`.
pub fn simulate(model: &dyn QuasiLinearModel, theta: &[f64], u: &InputSignal, seed: u64) -> Result<Trajectory> {
    simulate_with(model, theta, u, &mut rng_from_seed(seed)).map(|mut t| {
        t.seed = seed;
        t
    })
}

pub(crate) fn simulate_with<R: Rng + ?Sized>(
    model: &dyn QuasiLinearModel,
    theta: &[f64],
    u: &InputSignal,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = model.dims();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(DesignError::InvalidArgument(format!("non-finite θ {theta:?}")));
    }
    if u.input_dim != d.input {
        return Err(DesignError::Dimension(format!(
            "signal input dimension {} does not match model input dimension {}",
            u.input_dim, d.input
        )));
    }
    check_model_at(model, theta)?;
    let s0 = cholesky(&model.s0(theta), &format!("initial covariance S0 at θ = {theta:?}"))?;
    let sv = cholesky(model.sv(), "measurement noise covariance S_v")?;
    let mut normal = |n: usize| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

    let n_steps = u.horizon();
    let mut x = model.m0(theta) + s0.l() * normal(d.state);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut outputs = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        outputs.push(model.c() * &x + sv.l() * normal(d.output));
        states.push(x.clone());
        if k < n_steps {
            let m = model.step(theta, u.at(k));
            let w = normal(m.g.ncols());
            x = &m.a * &x + &m.b + &m.g * w;
        }
    }
    Ok(Trajectory { states, outputs, theta: theta.to_vec(), seed: 0 })
}
