//! The four built-in systems with their published default constants.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ModelDims, ParameterPrior, QuasiLinearModel, SharedModel, SignalConstraint, StepMatrices};
use crate::error::{DesignError, Result};
use crate::quadrature::Scheme;

/// Relaxation time in seconds used to map the dimensionless sensor parameter to Hz.
pub const T2_SECONDS: f64 = 0.87e-3;

/// Larmor frequency in Hz for a dimensionless θ.
pub fn larmor_hz(theta: f64) -> f64 {
    theta / (2.0 * std::f64::consts::PI * T2_SECONDS)
}

pub const EXAMPLE_NAMES: [&str; 4] = ["example1", "dc_motor", "atomic_oscillator", "opm_reduced"];

/// A built-in model plus the experiment defaults that go with it.
#[derive(Clone)]
pub struct ExampleSetup {
    pub name: String,
    pub model: SharedModel,
    pub prior: ParameterPrior,
    pub scheme: Scheme,
    /// Whether `G` and `S0` are independent of the input, so the log-det
    /// terms of the pair distance can be dropped.
    pub fast_path: bool,
    pub horizon: usize,
    pub constraint: SignalConstraint,
}

impl std::fmt::Debug for ExampleSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExampleSetup")
            .field("name", &self.name)
            .field("prior", &self.prior)
            .field("scheme", &self.scheme)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

struct Params<'a> {
    model: &'a str,
    values: BTreeMap<&'static str, f64>,
}

impl<'a> Params<'a> {
    fn new(model: &'a str, defaults: &[(&'static str, f64)], overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values: BTreeMap<&'static str, f64> = defaults.iter().cloned().collect();
        for (k, v) in overrides {
            let Some((key, _)) = defaults.iter().find(|(d, _)| d == k) else {
                return Err(DesignError::UnknownOverride { model: model.to_string(), key: k.clone() });
            };
            if !v.is_finite() {
                return Err(DesignError::InvalidArgument(format!("override {k} must be finite")));
            }
            values.insert(key, *v);
        }
        Ok(Params { model, values })
    }

    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(DesignError::InvalidArgument(format!("{}: {key} must be positive, got {v}", self.model)))
        }
    }

    fn nonnegative(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(DesignError::InvalidArgument(format!("{}: {key} must be nonnegative, got {v}", self.model)))
        }
    }
}

/// Documented override keys and their defaults for a built-in model.
pub fn example_defaults(name: &str) -> Result<&'static [(&'static str, f64)]> {
    Ok(match name {
        "example1" => &[
            ("sigma_v", 0.1),
            ("g", 0.01),
            ("s0", 0.01),
            ("m_theta1", 0.8),
            ("m_theta2", 0.2),
            ("s_theta", 1e-3),
            ("horizon", 100.0),
            ("rho", 1.0),
        ],
        "dc_motor" => &[
            ("delta", 0.05e-3),
            ("d_c", 0.01),
            ("s_v", 0.1),
            ("prior_a", 0.05),
            ("prior_b", 2.0),
            ("horizon", 100.0),
            ("rho", 1.0),
        ],
        "atomic_oscillator" => &[
            ("delta", 5.7471e-3),
            ("s_v", 11.85),
            ("b_c", 1e5),
            ("m_theta", 54.6637),
            ("s_theta", 10.76),
            ("horizon", 350.0),
            ("rho", 1.0),
        ],
        "opm_reduced" => &[
            ("delta", 5.7471e-3),
            ("sigma_v", 11.85),
            ("b_c", 1.22e6),
            ("m_theta", 54.6637),
            ("s_theta", 3e-3),
            ("horizon", 350.0),
            ("u_max", 200.0),
        ],
        other => return Err(DesignError::UnknownModel(other.to_string())),
    })
}

/// Build a named example, applying numeric overrides to its defaults.
pub fn make_example(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ExampleSetup> {
    let p = Params::new(name, example_defaults(name)?, overrides)?;
    let horizon = p.positive("horizon")?.round() as usize;
    let ball = |p: &Params| p.positive("rho").map(|r| SignalConstraint::ball_at_origin(horizon, r));
    let setup = match name {
        "example1" => {
            let model = Example1 {
                g: p.nonnegative("g")?,
                c: DMatrix::from_element(1, 1, 1.0),
                sv: DMatrix::from_element(1, 1, p.positive("sigma_v")?.powi(2)),
                s0: p.positive("s0")?,
            };
            let s = p.positive("s_theta")?;
            ExampleSetup {
                name: name.into(),
                model: Arc::new(model),
                prior: ParameterPrior::Gaussian {
                    mean: vec![p.get("m_theta1"), p.get("m_theta2")],
                    cov: vec![vec![s, 0.0], vec![0.0, s]],
                },
                scheme: Scheme::Sigma2n,
                fast_path: true,
                horizon,
                constraint: ball(&p)?,
            }
        }
        "dc_motor" => {
            let (a, b) = (p.get("prior_a"), p.get("prior_b"));
            if !(a > 0.0 && a < b) {
                return Err(DesignError::InvalidArgument("dc_motor: need 0 < prior_a < prior_b".into()));
            }
            let model = DcMotor {
                delta: p.positive("delta")?,
                d_c: p.nonnegative("d_c")?,
                c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                sv: DMatrix::from_element(1, 1, p.positive("s_v")?.powi(2)),
            };
            ExampleSetup {
                name: name.into(),
                model: Arc::new(model),
                prior: ParameterPrior::uniform_scalar(a, b),
                scheme: Scheme::Gl2,
                fast_path: true,
                horizon,
                constraint: ball(&p)?,
            }
        }
        "atomic_oscillator" => {
            let model = Oscillator {
                delta: p.positive("delta")?,
                b_c: p.get("b_c"),
                input_damping: false,
                c: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                sv: DMatrix::from_element(1, 1, p.positive("s_v")?.powi(2)),
            };
            ExampleSetup {
                name: name.into(),
                model: Arc::new(model),
                prior: ParameterPrior::gaussian_scalar(p.get("m_theta"), p.positive("s_theta")?),
                scheme: Scheme::Sigma2n,
                fast_path: true,
                horizon,
                constraint: ball(&p)?,
            }
        }
        "opm_reduced" => {
            let model = Oscillator {
                delta: p.positive("delta")?,
                b_c: p.get("b_c"),
                input_damping: true,
                c: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                sv: DMatrix::from_element(1, 1, p.positive("sigma_v")?.powi(2)),
            };
            let u_max = p.positive("u_max")?;
            ExampleSetup {
                name: name.into(),
                model: Arc::new(model),
                prior: ParameterPrior::gaussian_scalar(p.get("m_theta"), p.positive("s_theta")?),
                scheme: Scheme::Sigma2n,
                fast_path: false,
                horizon,
                constraint: SignalConstraint::uniform_box(horizon, 0.0, u_max),
            }
        }
        _ => unreachable!("names validated by example_defaults"),
    };
    Ok(setup)
}

/// `x' = θ1 x + θ2 u + g w`, `y = x + σ_v v`.
struct Example1 {
    g: f64,
    c: DMatrix<f64>,
    sv: DMatrix<f64>,
    s0: f64,
}

impl QuasiLinearModel for Example1 {
    fn name(&self) -> &str {
        "example1"
    }
    fn dims(&self) -> ModelDims {
        ModelDims { state: 1, noise: 1, output: 1, input: 1, theta: 2 }
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        StepMatrices {
            a: DMatrix::from_element(1, 1, theta[0]),
            b: DVector::from_element(1, theta[1] * u[0]),
            g: DMatrix::from_element(1, 1, self.g),
        }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn s0(&self, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.s0)
    }
}

/// Damped integrator driven by `θ u`, sampled with zero-order hold.
struct DcMotor {
    delta: f64,
    d_c: f64,
    c: DMatrix<f64>,
    sv: DMatrix<f64>,
}

impl DcMotor {
    /// Normalized noise covariance entries `(D11, D12, D22)` before the `d_c θ` factor.
    fn d_entries(&self, theta: f64) -> (f64, f64, f64) {
        let dt = self.delta;
        let x = theta * dt;
        let em = (-x).exp_m1();
        let d11 = if x.abs() < 0.5 {
            // (4e^{-x} - e^{-2x} + 2x - 3) / (2x³) as a power series; the closed
            // form cancels catastrophically for small x.
            let (mut sum, mut fact, mut pw) = (0.0, 6.0, 1.0);
            for n in 3..30 {
                if n > 3 {
                    fact *= n as f64;
                }
                let c = (4.0 * (-1f64).powi(n) - (-2f64).powi(n)) / (2.0 * fact);
                sum += c * pw;
                pw *= x;
            }
            sum * dt.powi(3)
        } else {
            (4.0 * (-x).exp() - (-2.0 * x).exp() + 2.0 * x - 3.0) / (2.0 * theta.powi(3))
        };
        let d12 = em * em / (2.0 * theta * theta);
        let d22 = -(-2.0 * x).exp_m1() / (2.0 * theta);
        (d11, d12, d22)
    }
}

impl QuasiLinearModel for DcMotor {
    fn name(&self) -> &str {
        "dc_motor"
    }
    fn dims(&self) -> ModelDims {
        ModelDims { state: 2, noise: 2, output: 1, input: 1, theta: 1 }
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        let t = theta[0];
        let x = t * self.delta;
        let em = (-x).exp_m1();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -em / t, 0.0, 1.0 + em]);
        let b = DVector::from_column_slice(&[(x + em) / t * u[0], -em * u[0]]);
        let (d11, d12, d22) = self.d_entries(t);
        let s = (self.d_c * t).sqrt();
        let r11 = d11.sqrt();
        let r22 = ((d11 * d22 - d12 * d12) / d11).max(0.0).sqrt();
        let g = DMatrix::from_row_slice(2, 2, &[s * r11, 0.0, s * d12 / r11, s * r22]);
        StepMatrices { a, b, g }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn s0(&self, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&[0.001, 0.005]))
    }
    fn sampling_period(&self) -> f64 {
        self.delta
    }
}

/// Damped spin oscillator; with `input_damping` the input also raises the
/// relaxation rate to `1 + u` (the reduced magnetometer model).
struct Oscillator {
    delta: f64,
    b_c: f64,
    input_damping: bool,
    c: DMatrix<f64>,
    sv: DMatrix<f64>,
}

impl QuasiLinearModel for Oscillator {
    fn name(&self) -> &str {
        if self.input_damping {
            "opm_reduced"
        } else {
            "atomic_oscillator"
        }
    }
    fn dims(&self) -> ModelDims {
        ModelDims { state: 2, noise: 2, output: 1, input: 1, theta: 1 }
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        let (t, u) = (theta[0], u[0]);
        let rate = if self.input_damping { 1.0 + u } else { 1.0 };
        let e = (-rate * self.delta).exp();
        let (s, c) = (t * self.delta).sin_cos();
        let a = DMatrix::from_row_slice(2, 2, &[e * c, e * s, -e * s, e * c]);
        let k = self.b_c * u / (rate * rate + t * t);
        let b = DVector::from_column_slice(&[k * (t - e * (t * c + rate * s)), k * (e * (t * s - rate * c) + rate)]);
        let gs = (-(-2.0 * rate * self.delta).exp_m1()).sqrt();
        StepMatrices { a, b, g: DMatrix::from_diagonal_element(2, 2, gs) }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn s0(&self, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn sampling_period(&self) -> f64 {
        self.delta
    }
    fn natural_frequency(&self, theta: &[f64]) -> Option<f64> {
        Some(theta[0])
    }
}
