//! Scalar comparison of the information-theoretic floor with the Bayesian
//! Cramér-Rao floor for `y = θ + v`, `v ~ N(0, 1)`.
//!
//! The smoothed-uniform prior is `U[-1, 1]` convolved with `N(0, α^{-2})`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

pub const DEFAULT_GAP_GRID: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Smoothing parameter; zero for the Gaussian variant.
    pub alpha: f64,
    pub j_p: f64,
    pub j_d: f64,
    pub bcrb_floor: f64,
    pub itb_floor: f64,
    /// Whether `J_P >= α/(2√π)` held at this `α`.
    pub jp_bound_holds: bool,
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Density of `U[-1, 1]` convolved with `N(0, s²)`, evaluated without
/// cancellation in the tails.
fn smoothed_uniform(x: f64, s: f64) -> f64 {
    let t = x.abs();
    0.25 * (libm::erfc(-(1.0 - t) / s * FRAC_1_SQRT_2) - libm::erfc((1.0 + t) / s * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn neg_p_ln_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Floors for the channel `y = θ + v` given the differential entropies of θ
/// and y and the prior Fisher information.
fn floors(h_theta: f64, h_y: f64, j_p: f64) -> (f64, f64) {
    let two_pi_e = 2.0 * PI * std::f64::consts::E;
    let info = h_y - 0.5 * two_pi_e.ln();
    (1.0 / (j_p + 1.0), super::itb_floor(h_theta, info, 1))
}

fn smoothed_j_p(alpha: f64, half_width: f64, grid: usize) -> f64 {
    let s = 1.0 / alpha;
    let integrand = |t: f64| {
        let p = smoothed_uniform(t, s);
        if p <= 0.0 {
            return 0.0;
        }
        let dp = 0.5 * alpha * (std_normal_pdf(alpha * (1.0 + t)) - std_normal_pdf(alpha * (1.0 - t)));
        dp * dp / p
    };
    simpson(integrand, -half_width, half_width, grid)
}

/// Floors for the smoothed-uniform prior at smoothing `alpha`, integrated
/// with `grid` Simpson intervals.
pub fn itb_bcrb_gap_demo(alpha: f64, grid: usize) -> Result<GapReport> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(DesignError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if grid < 8 {
        return Err(DesignError::InvalidArgument("grid needs at least 8 intervals".into()));
    }
    let half = 1.0 + 10.0 / alpha;
    let j_p = smoothed_j_p(alpha, half, grid);
    let coarse = smoothed_j_p(alpha, half, grid / 2);
    if (j_p - coarse).abs() > 1e-4 * j_p.max(1.0) {
        return Err(DesignError::Numerical(format!(
            "grid of {grid} intervals too coarse for alpha = {alpha}: J_P moved from {coarse} to {j_p}"
        )));
    }
    let mass = simpson(|t| smoothed_uniform(t, 1.0 / alpha), -half, half, grid);
    if (mass - 1.0).abs() > 1e-4 {
        return Err(DesignError::Numerical(format!("grid of {grid} intervals too coarse: prior mass {mass}")));
    }
    let jp_bound_holds = j_p >= alpha / (2.0 * PI.sqrt());
    let h_theta = simpson(|t| neg_p_ln_p(smoothed_uniform(t, 1.0 / alpha)), -half, half, grid);
    let sy = (1.0 + 1.0 / (alpha * alpha)).sqrt();
    let hy_half = 1.0 + 12.0 * sy;
    let h_y = simpson(|y| neg_p_ln_p(smoothed_uniform(y, sy)), -hy_half, hy_half, grid);
    let (bcrb_floor, itb_floor) = floors(h_theta, h_y, j_p);
    Ok(GapReport { alpha, j_p, j_d: 1.0, bcrb_floor, itb_floor, jp_bound_holds })
}

/// Same computation for a Gaussian prior `N(0, σ²)`, where both floors equal `σ²/(σ²+1)`.
pub fn itb_bcrb_gap_gaussian(sigma: f64, grid: usize) -> Result<GapReport> {
    if !(sigma > 0.0) {
        return Err(DesignError::InvalidArgument("sigma must be positive".into()));
    }
    let pdf = |x: f64, s: f64| std_normal_pdf(x / s) / s;
    let w = 12.0 * sigma;
    let j_p = simpson(|t| (t / (sigma * sigma)).powi(2) * pdf(t, sigma), -w, w, grid);
    let h_theta = simpson(|t| neg_p_ln_p(pdf(t, sigma)), -w, w, grid);
    let sy = (sigma * sigma + 1.0).sqrt();
    let h_y = simpson(|y| neg_p_ln_p(pdf(y, sy)), -12.0 * sy, 12.0 * sy, grid);
    let (bcrb_floor, itb_floor) = floors(h_theta, h_y, j_p);
    Ok(GapReport { alpha: 0.0, j_p, j_d: 1.0, bcrb_floor, itb_floor, jp_bound_holds: true })
}
