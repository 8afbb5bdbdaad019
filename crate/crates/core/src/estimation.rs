//! MAP estimation and the Monte Carlo error harness.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DesignError, Result};
use crate::kalman::neg_log_posterior;
use crate::model::{simulate, InputSignal, ParameterPrior, QuasiLinearModel};
use crate::seed::{derive_seed, rng_from_seed};

const STREAM_THETA: u64 = 0x7E7A;
const STREAM_NOISE: u64 = 0x9015E;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSearchConfig {
    /// Grid points per dimension for the coarse scan.
    pub grid: usize,
    /// Search box per dimension; `None` derives it from the prior.
    pub span: Option<Vec<(f64, f64)>>,
    /// Refinement tolerance as a fraction of the span width.
    pub rel_tol: f64,
    /// Golden-section iterations (1-D) or coordinate passes (n_θ ≥ 2).
    pub max_iter: usize,
}

impl Default for MapSearchConfig {
    fn default() -> Self {
        MapSearchConfig { grid: 101, span: None, rel_tol: 1e-8, max_iter: 200 }
    }
}

impl MapSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 {
            return Err(DesignError::InvalidArgument(format!("MAP grid needs at least 3 points, got {}", self.grid)));
        }
        if !(self.rel_tol > 0.0) || self.max_iter == 0 {
            return Err(DesignError::InvalidArgument("MAP refinement tolerance and iterations must be positive".into()));
        }
        if let Some(s) = &self.span {
            if s.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                return Err(DesignError::InvalidArgument("MAP span needs finite lower < upper".into()));
            }
        }
        Ok(())
    }

    fn resolve_span(&self, prior: &ParameterPrior) -> Result<Vec<(f64, f64)>> {
        if let Some(s) = &self.span {
            if s.len() != prior.dim() {
                return Err(DesignError::Dimension("MAP span length differs from θ dimension".into()));
            }
            return Ok(s.clone());
        }
        Ok(match prior {
            ParameterPrior::Gaussian { mean, cov } => {
                mean.iter().enumerate().map(|(i, m)| (m - 4.0 * cov[i][i].sqrt(), m + 4.0 * cov[i][i].sqrt())).collect()
            }
            ParameterPrior::UniformBox { lower, upper } => lower.iter().cloned().zip(upper.iter().cloned()).collect(),
            ParameterPrior::Discrete { .. } => unreachable!("discrete priors are searched over their nodes"),
        })
    }
}

/// Outcome of one MAP search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub theta: Vec<f64>,
    pub neg_log_posterior: f64,
}

fn objective<'a>(
    model: &'a dyn QuasiLinearModel,
    prior: &'a ParameterPrior,
    y: &'a [f64],
    u: &'a InputSignal,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |t: &[f64]| match neg_log_posterior(model, prior, t, y, u) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Golden-section minimization on `[a, b]`, returning the best point seen.
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..max_iter {
        if b - a < tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximum a posteriori estimate of θ from stacked outputs `y`.
///
/// Continuous priors: grid scan over the search box, then golden-section
/// refinement (coordinate passes when n_θ ≥ 2). Discrete priors: best node.
/// Ties go to the lower grid or node index.
pub fn map_estimate(
    model: &dyn QuasiLinearModel,
    prior: &ParameterPrior,
    y: &[f64],
    u: &InputSignal,
    cfg: &MapSearchConfig,
) -> Result<MapEstimate> {
    cfg.validate()?;
    prior.validate()?;
    let d = model.dims();
    if prior.dim() != d.theta {
        return Err(DesignError::Dimension(format!("prior dimension {} vs model θ dimension {}", prior.dim(), d.theta)));
    }
    if y.len() != (u.horizon() + 1) * d.output {
        return Err(DesignError::Dimension(format!(
            "expected {} stacked outputs for horizon {}, got {}",
            (u.horizon() + 1) * d.output,
            u.horizon(),
            y.len()
        )));
    }
    let f = objective(model, prior, y, u);
    let all_bad = || DesignError::Numerical("neg-log-posterior is non-finite at every grid point".into());

    if let ParameterPrior::Discrete { nodes, .. } = prior {
        let vals: Vec<f64> = nodes.par_iter().map(|t| f(t)).collect();
        let best = argmin(&vals).ok_or_else(all_bad)?;
        return Ok(MapEstimate { theta: nodes[best].clone(), neg_log_posterior: vals[best] });
    }

    let span = cfg.resolve_span(prior)?;
    let g = cfg.grid;
    let axis = |i: usize, j: usize| span[i].0 + (span[i].1 - span[i].0) * j as f64 / (g - 1) as f64;
    let total = g.checked_pow(d.theta as u32).ok_or_else(|| DesignError::GuardExceeded("MAP grid too large".into()))?;
    let point = |mut idx: usize| -> Vec<f64> {
        let mut t = vec![0.0; d.theta];
        for (i, ti) in t.iter_mut().enumerate().rev() {
            *ti = axis(i, idx % g);
            idx /= g;
        }
        t
    };
    let vals: Vec<f64> = (0..total).into_par_iter().map(|k| f(&point(k))).collect();
    let best = argmin(&vals).ok_or_else(all_bad)?;
    let mut theta = point(best);
    let mut fbest = vals[best];
    let widths: Vec<f64> = span.iter().map(|(a, b)| b - a).collect();
    let spacing: Vec<f64> = widths.iter().map(|w| w / (g - 1) as f64).collect();

    if d.theta == 1 {
        let (a, b) = ((theta[0] - spacing[0]).max(span[0].0), (theta[0] + spacing[0]).min(span[0].1));
        let (x, fx) = golden(|x| f(&[x]), a, b, cfg.rel_tol * widths[0], cfg.max_iter);
        if fx < fbest {
            theta[0] = x;
            fbest = fx;
        }
        return Ok(MapEstimate { theta, neg_log_posterior: fbest });
    }

    for _ in 0..cfg.max_iter {
        let mut moved = 0.0f64;
        for i in 0..d.theta {
            let (a, b) = ((theta[i] - spacing[i]).max(span[i].0), (theta[i] + spacing[i]).min(span[i].1));
            let mut probe = theta.clone();
            let line = |x: f64| {
                let mut p = probe.clone();
                p[i] = x;
                f(&p)
            };
            let (x, fx) = golden(line, a, b, cfg.rel_tol * widths[i], 200);
            if fx < fbest {
                moved = moved.max((x - theta[i]).abs() / widths[i]);
                probe[i] = x;
                theta = probe;
                fbest = fx;
            }
        }
        if moved < cfg.rel_tol {
            break;
        }
    }
    Ok(MapEstimate { theta, neg_log_posterior: fbest })
}

fn argmin(vals: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in vals.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v < vals[b]) {
            best = Some(i);
        }
    }
    best
}

/// Monte Carlo squared-error summary for one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: usize,
    pub seed: u64,
    pub theta_true: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub sq_errors: Vec<f64>,
    pub mse: f64,
    /// Sample standard deviation over `√trials`; zero for a single trial.
    pub stderr: f64,
    /// SHA-256 of the true-θ draws, identical across paired signals.
    pub theta_digest: String,
    #[serde(skip)]
    pub elapsed: f64,
}

impl McReport {
    /// Recompute the aggregates from the per-trial errors.
    pub fn check(&self) -> Result<()> {
        let (mse, stderr) = mean_and_stderr(&self.sq_errors);
        if self.sq_errors.len() != self.trials || mse != self.mse || stderr != self.stderr {
            return Err(DesignError::Numerical("Monte Carlo aggregates are inconsistent".into()));
        }
        Ok(())
    }
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = kahan_sum(xs.iter().cloned()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn theta_digest(thetas: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for t in thetas {
        for v in t {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// True parameter of trial `t`; shared by every signal under the same seed.
pub fn trial_theta(prior: &ParameterPrior, seed: u64, t: usize) -> Vec<f64> {
    prior.sample_with(&mut rng_from_seed(derive_seed(seed, t as u64, STREAM_THETA)))
}

/// Mean squared MAP error over `trials` draws of θ and noise from the prior.
pub fn mc_error(
    model: &dyn QuasiLinearModel,
    prior: &ParameterPrior,
    u: &InputSignal,
    trials: usize,
    seed: u64,
    cfg: &MapSearchConfig,
) -> Result<McReport> {
    if trials == 0 {
        return Err(DesignError::InvalidArgument("need at least one trial".into()));
    }
    cfg.validate()?;
    prior.validate()?;
    let clock = Instant::now();
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let theta = trial_theta(prior, seed, t);
            let wrap = |e| DesignError::Trial { trial: t, source: Box::new(e) };
            let traj = simulate(model, &theta, u, derive_seed(seed, t as u64, STREAM_NOISE)).map_err(wrap)?;
            let est = map_estimate(model, prior, &traj.stacked_outputs(), u, cfg).map_err(wrap)?;
            let err = theta.iter().zip(&est.theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            Ok((theta, est.theta, err))
        })
        .collect::<Result<_>>()?;
    let sq_errors: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let (mse, stderr) = mean_and_stderr(&sq_errors);
    let theta_true: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    Ok(McReport {
        trials,
        seed,
        theta_digest: theta_digest(&theta_true),
        theta_true,
        theta_hat: rows.into_iter().map(|r| r.1).collect(),
        sq_errors,
        mse,
        stderr,
        elapsed: clock.elapsed().as_secs_f64(),
    })
}

/// Paired Monte Carlo reports, one per named signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub names: Vec<String>,
    pub reports: Vec<McReport>,
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl Comparison {
    /// Rows `signal,trial,theta_true_*,theta_hat_*,sq_error`, LF-terminated.
    pub fn to_csv(&self) -> String {
        let nt = self.reports.first().and_then(|r| r.theta_true.first()).map_or(0, |t| t.len());
        let mut out = String::from("signal,trial");
        for i in 0..nt {
            out += &format!(",theta_true_{i}");
        }
        for i in 0..nt {
            out += &format!(",theta_hat_{i}");
        }
        out += ",sq_error\n";
        for (name, r) in self.names.iter().zip(&self.reports) {
            for t in 0..r.trials {
                out += &format!("{name},{t}");
                for v in r.theta_true[t].iter().chain(&r.theta_hat[t]) {
                    out += ",";
                    out += &format_float(*v);
                }
                out += ",";
                out += &format_float(r.sq_errors[t]);
                out += "\n";
            }
        }
        out
    }

    /// `mse_a - mse_b` and the standard error of the paired per-trial differences.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let d: Vec<f64> =
            self.reports[a].sq_errors.iter().zip(&self.reports[b].sq_errors).map(|(x, y)| x - y).collect();
        mean_and_stderr(&d)
    }
}

/// Monte Carlo error for several signals under common θ and noise draws.
pub fn compare_signals(
    model: &dyn QuasiLinearModel,
    prior: &ParameterPrior,
    signals: &[(String, InputSignal)],
    trials: usize,
    seed: u64,
    cfg: &MapSearchConfig,
) -> Result<Comparison> {
    let Some((_, first)) = signals.first() else {
        return Err(DesignError::InvalidArgument("no signals to compare".into()));
    };
    if let Some((name, _)) = signals.iter().find(|(_, s)| s.horizon() != first.horizon() || s.input_dim != first.input_dim) {
        return Err(DesignError::Dimension(format!("signal `{name}` has a different horizon")));
    }
    let reports = signals.iter().map(|(_, u)| mc_error(model, prior, u, trials, seed, cfg)).collect::<Result<_>>()?;
    Ok(Comparison { names: signals.iter().map(|(n, _)| n.clone()).collect(), reports })
}
