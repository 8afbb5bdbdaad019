//! Constrained maximization of design objectives over input signals.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{avg_d_optimal_with_gains, node_gains, LtiSisoAdapter, StationaryGain};
use crate::bounds::{il_from_distances, MixtureDesignProblem};
use crate::error::{DesignError, Result};
use crate::kalman::{fd_tails, run, CovSweep, FastPair, FastPairCache, PairRecursion};
use crate::model::{InputSignal, SignalConstraint};
use crate::quadrature::DiscretePrior;
use crate::seed::{derive_seed, rng_from_seed};

/// A scalar function of the signal to be maximized.
pub trait Objective: Sync {
    fn value(&self, u: &InputSignal) -> Result<f64>;

    /// Central finite-difference gradient with step `h`.
    fn gradient(&self, u: &InputSignal, h: f64) -> Result<Vec<f64>> {
        (0..u.values.len())
            .into_par_iter()
            .map(|i| {
                let mut p = u.clone();
                p.values[i] += h;
                let fp = self.value(&p)?;
                p.values[i] -= 2.0 * h;
                let fm = self.value(&p)?;
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    }
}

/// Wraps a closure as an objective.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&InputSignal) -> Result<f64> + Sync> Objective for FnObjective<F> {
    fn value(&self, u: &InputSignal) -> Result<f64> {
        (self.0)(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    KtBound,
    TwoAlt,
    AvgDOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Zero,
    Constant,
    Harmonic,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    pub objective: ObjectiveKind,
    pub max_iter: usize,
    /// Finite-difference step; `None` means `1e-4 · max(1, |U|_∞)`.
    pub fd_step: Option<f64>,
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
    pub starts: usize,
    pub init: Vec<InitStrategy>,
    pub seed: u64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            objective: ObjectiveKind::KtBound,
            max_iter: 200,
            fd_step: None,
            tol: 1e-7,
            starts: 4,
            init: vec![InitStrategy::Zero, InitStrategy::Constant, InitStrategy::Harmonic, InitStrategy::Random],
            seed: 0,
        }
    }
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(DesignError::InvalidArgument("tolerance must be positive".into()));
        }
        if self.starts == 0 || self.init.is_empty() {
            return Err(DesignError::InvalidArgument("need at least one start".into()));
        }
        if self.fd_step.is_some_and(|h| !(h > 0.0)) {
            return Err(DesignError::InvalidArgument("finite-difference step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActiveConstraint {
    /// `|U - Ũ| / ρ`
    Ball { radius_fraction: f64 },
    /// Fraction of components within `1e-6` of a bound.
    Box { on_bound_fraction: f64 },
}

pub fn active_constraint(u: &InputSignal, c: &SignalConstraint) -> ActiveConstraint {
    match c {
        SignalConstraint::Ball { center, radius } => {
            let d = u.values.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            ActiveConstraint::Ball { radius_fraction: d / radius }
        }
        SignalConstraint::Box { lower, upper } => {
            let on = u
                .values
                .iter()
                .zip(lower.iter().zip(upper))
                .filter(|(x, (a, b))| (*x - *a).abs() <= 1e-6 || (*x - *b).abs() <= 1e-6)
                .count();
            ActiveConstraint::Box { on_bound_fraction: on as f64 / u.values.len().max(1) as f64 }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub u_star: InputSignal,
    /// Objective at `u_star`; for the bound objective this is always `I_l`.
    pub objective: f64,
    /// Trace of the winning start, in units of the surrogate actually climbed
    /// (`d_12` for a two-node bound).
    pub trace: Vec<TraceRow>,
    pub active: ActiveConstraint,
    /// Index into the start list of the winning start.
    pub best_start: usize,
    /// Final surrogate objective of every start, in start order.
    pub start_objectives: Vec<f64>,
    /// Wall-clock seconds; excluded from deterministic outputs.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Euclidean projection onto the admissible set.
pub fn project(u: &InputSignal, c: &SignalConstraint) -> InputSignal {
    let mut out = u.clone();
    project_in_place(&mut out.values, c);
    out
}

fn project_in_place(v: &mut [f64], c: &SignalConstraint) {
    match c {
        SignalConstraint::Ball { center, radius } => {
            let d = v.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d > *radius {
                let s = radius / d;
                for (x, c0) in v.iter_mut().zip(center) {
                    *x = c0 + s * (*x - c0);
                }
            }
        }
        SignalConstraint::Box { lower, upper } => {
            for (x, (a, b)) in v.iter_mut().zip(lower.iter().zip(upper)) {
                *x = x.clamp(*a, *b);
            }
        }
    }
}

/// Pairwise-distance bound as an objective. On the fast path the `U`-independent
/// log-determinant terms are computed once and the mean recursion runs over a
/// frozen covariance sequence.
pub struct KtObjective<'a> {
    problem: &'a MixtureDesignProblem,
    fast: Option<Vec<(usize, usize, FastPairCache, f64)>>,
}

impl<'a> KtObjective<'a> {
    pub fn new(problem: &'a MixtureDesignProblem) -> Result<Self> {
        let fast = if problem.fast_path { Some(fast_caches(problem)?) } else { None };
        Ok(KtObjective { problem, fast })
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let r = self.problem.dprior.len();
        (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect()
    }

    fn assemble(&self, vals: &[f64]) -> f64 {
        let r = self.problem.dprior.len();
        let mut d = vec![vec![0.0; r]; r];
        for (&(i, j), &v) in self.pairs().iter().zip(vals) {
            d[i][j] = v;
            d[j][i] = v;
        }
        il_from_distances(&self.problem.dprior.weights, &d)
    }
}

fn fast_caches(problem: &MixtureDesignProblem) -> Result<Vec<(usize, usize, FastPairCache, f64)>> {
    let model = problem.model.as_ref();
    let nodes = &problem.dprior.nodes;
    let u0 = InputSignal::zeros(problem.horizon, model.dims().input);
    let lds: Vec<f64> = nodes.iter().map(|t| run(&CovSweep::new(model, t), &u0).map(|s| s.log_det)).collect::<Result<_>>()?;
    let r = nodes.len();
    let mut out = Vec::new();
    for i in 0..r {
        for j in i + 1..r {
            let cache = FastPairCache::new(model, &nodes[i], &nodes[j], &u0)?;
            let c = 0.5 * cache.log_det - 0.25 * (lds[i] + lds[j]);
            out.push((i, j, cache, c));
        }
    }
    Ok(out)
}

/// Per-pair `(d(U), [(d(U+he_i), d(U-he_i))])` in the full three-term form.
fn full_pair_tails(problem: &MixtureDesignProblem, u: &InputSignal, h: f64) -> Result<Vec<(f64, Vec<(f64, f64)>)>> {
    let model = problem.model.as_ref();
    let nodes = &problem.dprior.nodes;
    let singles: Vec<(f64, Vec<(f64, f64)>)> = nodes
        .iter()
        .map(|t| fd_tails(&CovSweep::new(model, t), u, h, |s| s.log_det))
        .collect::<Result<_>>()?;
    let r = nodes.len();
    let mut out = Vec::new();
    for i in 0..r {
        for j in i + 1..r {
            let (pb, pt) =
                fd_tails(&PairRecursion::new(model, &nodes[i], &nodes[j]), u, h, |s| 0.25 * s.quad + 0.5 * s.log_det)?;
            let base = pb - 0.25 * (singles[i].0 + singles[j].0);
            let tails = pt
                .iter()
                .zip(singles[i].1.iter().zip(&singles[j].1))
                .map(|(p, (a, b))| (p.0 - 0.25 * (a.0 + b.0), p.1 - 0.25 * (a.1 + b.1)))
                .collect();
            out.push((base, tails));
        }
    }
    Ok(out)
}

fn fast_pair_tails(
    problem: &MixtureDesignProblem,
    caches: &[(usize, usize, FastPairCache, f64)],
    u: &InputSignal,
    h: f64,
    with_constants: bool,
) -> Result<Vec<(f64, Vec<(f64, f64)>)>> {
    let model = problem.model.as_ref();
    let nodes = &problem.dprior.nodes;
    caches
        .iter()
        .map(|(i, j, cache, c)| {
            let c = if with_constants { *c } else { 0.0 };
            let r = FastPair { model, ti: &nodes[*i], tj: &nodes[*j], cache };
            fd_tails(&r, u, h, |s| 0.25 * s.quad + c)
        })
        .collect()
}

fn combine_gradient(tails: &[(f64, Vec<(f64, f64)>)], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let n = tails.first().map_or(0, |t| t.1.len());
    (0..n)
        .map(|c| {
            let plus: Vec<f64> = tails.iter().map(|t| t.1[c].0).collect();
            let minus: Vec<f64> = tails.iter().map(|t| t.1[c].1).collect();
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

impl Objective for KtObjective<'_> {
    fn value(&self, u: &InputSignal) -> Result<f64> {
        self.problem.check_signal(u)?;
        let model = self.problem.model.as_ref();
        let nodes = &self.problem.dprior.nodes;
        let vals: Vec<f64> = match &self.fast {
            Some(caches) => caches
                .iter()
                .map(|(i, j, cache, c)| {
                    run(&FastPair { model, ti: &nodes[*i], tj: &nodes[*j], cache }, u).map(|s| 0.25 * s.quad + c)
                })
                .collect::<Result<_>>()?,
            None => self
                .pairs()
                .iter()
                .map(|&(i, j)| crate::kalman::pair_distance(model, &nodes[i], &nodes[j], u, false))
                .collect::<Result<_>>()?,
        };
        Ok(self.assemble(&vals))
    }

    fn gradient(&self, u: &InputSignal, h: f64) -> Result<Vec<f64>> {
        self.problem.check_signal(u)?;
        let tails = match &self.fast {
            Some(c) => fast_pair_tails(self.problem, c, u, h, true)?,
            None => full_pair_tails(self.problem, u, h)?,
        };
        Ok(combine_gradient(&tails, h, |v| self.assemble(v)))
    }
}

/// `d_12(U)` as an objective; only the quadratic term on the fast path.
pub struct TwoAltObjective<'a> {
    problem: &'a MixtureDesignProblem,
    fast: Option<Vec<(usize, usize, FastPairCache, f64)>>,
}

impl<'a> TwoAltObjective<'a> {
    pub fn new(problem: &'a MixtureDesignProblem) -> Result<Self> {
        if problem.dprior.len() != 2 {
            return Err(DesignError::InvalidArgument(format!(
                "two-alternative objective needs 2 nodes, got {}",
                problem.dprior.len()
            )));
        }
        let fast = if problem.fast_path { Some(fast_caches(problem)?) } else { None };
        Ok(TwoAltObjective { problem, fast })
    }
}

impl Objective for TwoAltObjective<'_> {
    fn value(&self, u: &InputSignal) -> Result<f64> {
        self.problem.check_signal(u)?;
        let model = self.problem.model.as_ref();
        let n = &self.problem.dprior.nodes;
        match &self.fast {
            Some(c) => run(&FastPair { model, ti: &n[0], tj: &n[1], cache: &c[0].2 }, u).map(|s| 0.25 * s.quad),
            None => crate::kalman::pair_distance(model, &n[0], &n[1], u, false),
        }
    }

    fn gradient(&self, u: &InputSignal, h: f64) -> Result<Vec<f64>> {
        self.problem.check_signal(u)?;
        let tails = match &self.fast {
            Some(c) => fast_pair_tails(self.problem, c, u, h, false)?,
            None => full_pair_tails(self.problem, u, h)?,
        };
        Ok(combine_gradient(&tails, h, |v| v[0]))
    }
}

/// Averaged D-optimal criterion as an objective.
pub struct AvgDObjective<'a> {
    adapter: &'a LtiSisoAdapter,
    dprior: &'a DiscretePrior,
    gains: Vec<StationaryGain>,
}

impl<'a> AvgDObjective<'a> {
    pub fn new(adapter: &'a LtiSisoAdapter, dprior: &'a DiscretePrior) -> Result<Self> {
        Ok(AvgDObjective { adapter, dprior, gains: node_gains(adapter, dprior)? })
    }
}

impl Objective for AvgDObjective<'_> {
    fn value(&self, u: &InputSignal) -> Result<f64> {
        avg_d_optimal_with_gains(self.adapter, self.dprior, &self.gains, u)
    }
}

fn constraint_scale(c: &SignalConstraint) -> f64 {
    match c {
        SignalConstraint::Ball { radius, .. } => *radius,
        SignalConstraint::Box { lower, upper } => {
            lower.iter().zip(upper).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
        }
    }
}

/// Starting signal for one strategy, already feasible.
pub fn initial_signal(
    problem: &MixtureDesignProblem,
    strategy: InitStrategy,
    seed: u64,
) -> InputSignal {
    let nu = problem.model.dims().input;
    let len = problem.horizon * nu;
    let c = &problem.constraint;
    let harmonic = |omega: f64| -> Vec<f64> {
        let dt = problem.model.sampling_period();
        (0..len).map(|i| (omega * (i / nu) as f64 * dt).cos()).collect()
    };
    let values = match (strategy, c) {
        (InitStrategy::Zero, _) => vec![0.0; len],
        (InitStrategy::Constant, SignalConstraint::Ball { center, radius }) => {
            center.iter().map(|c0| c0 + radius / (len as f64).sqrt()).collect()
        }
        (InitStrategy::Constant, SignalConstraint::Box { lower, upper }) => {
            lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect()
        }
        (InitStrategy::Harmonic, _) => {
            let mean = problem.prior.as_ref().map(|p| p.mean()).unwrap_or_else(|| problem.dprior.as_prior().mean());
            match problem.model.natural_frequency(&mean) {
                Some(omega) => {
                    let h = harmonic(omega);
                    match c {
                        SignalConstraint::Ball { center, radius } => {
                            let n = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                            center.iter().zip(&h).map(|(c0, v)| c0 + radius * v / n).collect()
                        }
                        SignalConstraint::Box { lower, upper } => lower
                            .iter()
                            .zip(upper)
                            .zip(&h)
                            .map(|((a, b), v)| a + 0.5 * (b - a) * (1.0 + v))
                            .collect(),
                    }
                }
                None => return initial_signal(problem, InitStrategy::Random, seed),
            }
        }
        (InitStrategy::Random, SignalConstraint::Ball { center, radius }) => {
            let mut rng = rng_from_seed(seed);
            let z: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = radius * rng.random::<f64>().powf(1.0 / len as f64);
            center.iter().zip(&z).map(|(c0, v)| c0 + r * v / n).collect()
        }
        (InitStrategy::Random, SignalConstraint::Box { lower, upper }) => {
            let mut rng = rng_from_seed(seed);
            lower.iter().zip(upper).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()
        }
    };
    let mut u = InputSignal { input_dim: nu, values };
    project_in_place(&mut u.values, c);
    u
}

struct StartOutcome {
    u: InputSignal,
    value: f64,
    trace: Vec<TraceRow>,
}

fn ascend(obj: &dyn Objective, c: &SignalConstraint, start: InputSignal, opt: &DesignOptions) -> Result<StartOutcome> {
    let mut u = start;
    let mut f = obj.value(&u)?;
    if !f.is_finite() {
        return Err(DesignError::Numerical(format!("objective is {f} at the initial point")));
    }
    let mut step = 0.5 * constraint_scale(c);
    let mut trace = vec![TraceRow { iter: 0, objective: f, grad_norm: f64::NAN, step: 0.0 }];
    for iter in 1..=opt.max_iter {
        let scale = u.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let h = opt.fd_step.unwrap_or(1e-4 * scale);
        let g = obj.gradient(&u, h)?;
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(DesignError::NonFiniteGradient { index });
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = u.clone();
            for (x, gi) in cand.values.iter_mut().zip(&g) {
                *x += step * gi / gn;
            }
            project_in_place(&mut cand.values, c);
            let fc = obj.value(&cand)?;
            if fc.is_finite() && fc > f {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
            if step < 1e-14 * constraint_scale(c) {
                break;
            }
        }
        let Some((cand, fc)) = accepted else { break };
        let rel = (fc - f) / f.abs().max(1e-300);
        u = cand;
        f = fc;
        trace.push(TraceRow { iter, objective: f, grad_norm: gn, step });
        step *= 1.3;
        if rel < opt.tol {
            break;
        }
    }
    Ok(StartOutcome { u, value: f, trace })
}

/// Best-of-starts projected gradient ascent on an arbitrary objective.
pub fn optimize_with(obj: &dyn Objective, problem: &MixtureDesignProblem, options: &DesignOptions) -> Result<DesignResult> {
    options.validate()?;
    problem.validate()?;
    let clock = Instant::now();
    let starts: Vec<InputSignal> = (0..options.starts)
        .map(|s| {
            let strategy = options.init[s % options.init.len()];
            let strategy = if s >= options.init.len() { InitStrategy::Random } else { strategy };
            initial_signal(problem, strategy, derive_seed(options.seed, s as u64, 0x5157))
        })
        .collect();
    let outcomes: Vec<Result<StartOutcome>> =
        starts.into_par_iter().map(|u0| ascend(obj, &problem.constraint, u0, options)).collect();
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut start_objectives = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        start_objectives.push(o.value);
        if best.as_ref().is_none_or(|(_, b)| o.value > b.value) {
            best = Some((i, o));
        }
    }
    let (best_start, o) = best.expect("at least one start");
    Ok(DesignResult {
        active: active_constraint(&o.u, &problem.constraint),
        u_star: o.u,
        objective: o.value,
        trace: o.trace,
        best_start,
        start_objectives,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Maximize the objective selected in `options` over the problem's constraint set.
pub fn optimize_signal(problem: &MixtureDesignProblem, options: &DesignOptions) -> Result<DesignResult> {
    problem.validate()?;
    match options.objective {
        ObjectiveKind::KtBound if problem.dprior.len() == 2 => {
            // I_l is increasing in d_12 but saturates at H_θ; climb d_12 instead
            let mut r = optimize_with(&TwoAltObjective::new(problem)?, problem, options)?;
            r.objective = crate::bounds::kt_lower_bound(problem, &r.u_star)?.i_l;
            Ok(r)
        }
        ObjectiveKind::KtBound => optimize_with(&KtObjective::new(problem)?, problem, options),
        ObjectiveKind::TwoAlt => optimize_with(&TwoAltObjective::new(problem)?, problem, options),
        ObjectiveKind::AvgDOptimal => {
            let adapter = LtiSisoAdapter::for_model(problem.model.clone())?;
            optimize_with(&AvgDObjective::new(&adapter, &problem.dprior)?, problem, options)
        }
    }
}

/// Closed-form maximizer of `(F1 U - F2 U)ᵀ (S1 + S2)^{-1} (F1 U - F2 U)` on the
/// ball of radius `rho`: `rho` times the top eigenvector, first nonzero
/// component positive.
pub fn eigen_solution_linear_two_alt(
    f1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    rho: f64,
) -> Result<InputSignal> {
    if f1.shape() != f2.shape() || s1.shape() != s2.shape() || s1.nrows() != f1.nrows() {
        return Err(DesignError::Dimension("eigen solution inputs have inconsistent shapes".into()));
    }
    let df = f1 - f2;
    let ch = crate::linalg::cholesky(&(s1 + s2), "S1 + S2")?;
    let mut q = df.transpose() * ch.solve(&df);
    crate::linalg::symmetrize(&mut q);
    let eig = SymmetricEigen::new(q);
    let imax = eig.eigenvalues.imax();
    let lmax = eig.eigenvalues[imax];
    if !lmax.is_finite() {
        return Err(DesignError::Numerical("eigen-solver returned a non-finite eigenvalue".into()));
    }
    let mut v: DVector<f64> = eig.eigenvectors.column(imax).into_owned();
    let vmax = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * vmax) {
        if *first < 0.0 {
            v = -v;
        }
    }
    Ok(InputSignal::scalar((v.normalize() * rho).iter().cloned().collect()))
}
