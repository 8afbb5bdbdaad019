//! TOML experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use infodesign::bounds::MixtureDesignProblem;
use infodesign::design::DesignOptions;
use infodesign::estimation::MapSearchConfig;
use infodesign::model::examples::{make_example, ExampleSetup};
use infodesign::model::{ParameterPrior, SignalConstraint};
use infodesign::quadrature::{discretize_prior, Scheme};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub trials: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { trials: 300 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// True parameter; drawn from the prior when absent.
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSection {
    pub alphas: Vec<f64>,
    pub grid: usize,
}

impl Default for GapSection {
    fn default() -> Self {
        GapSection { alphas: vec![0.1, 1.0, 10.0, 100.0, 1000.0], grid: infodesign::bounds::DEFAULT_GAP_GRID }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<ModelSection>,
    /// Replaces the example's default prior.
    pub prior: Option<ParameterPrior>,
    pub scheme: Option<Scheme>,
    pub fast_path: Option<bool>,
    /// Replaces the example's default constraint.
    pub constraint: Option<SignalConstraint>,
    #[serde(default)]
    pub design: DesignOptions,
    #[serde(default)]
    pub estimation: MapSearchConfig,
    #[serde(default)]
    pub montecarlo: McSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub gap: GapSection,
}

/// A parsed configuration with the digest of its source bytes.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub digest: String,
    pub seed: Option<u64>,
}

pub fn load(path: Option<&Path>, seed_flag: Option<u64>) -> CliResult<Loaded> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.display().to_string(), source })?,
        None => String::new(),
    };
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| {
        CliError::Config(format!("{}: {e}", path.map_or("<empty config>".into(), |p| p.display().to_string())))
    })?;
    let digest: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let seed = seed_flag.or(config.seed);
    Ok(Loaded { config, digest, seed })
}

impl ExperimentConfig {
    /// The example with the configured prior, scheme and constraint applied.
    pub fn setup(&self) -> CliResult<ExampleSetup> {
        let m = self.model.as_ref().ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        let mut ex = make_example(&m.name, &m.overrides)?;
        if let Some(p) = &self.prior {
            p.validate()?;
            if p.dim() != ex.model.dims().theta {
                return Err(CliError::Config(format!(
                    "prior has dimension {}, model `{}` has {} parameters",
                    p.dim(),
                    m.name,
                    ex.model.dims().theta
                )));
            }
            ex.prior = p.clone();
        }
        if let Some(s) = self.scheme {
            ex.scheme = s;
        }
        if let Some(f) = self.fast_path {
            ex.fast_path = f;
        }
        if let Some(c) = &self.constraint {
            c.validate()?;
            ex.horizon = c.len() / ex.model.dims().input;
            ex.constraint = c.clone();
        }
        Ok(ex)
    }

    pub fn problem(&self, ex: &ExampleSetup) -> CliResult<MixtureDesignProblem> {
        let problem = MixtureDesignProblem {
            model: ex.model.clone(),
            dprior: discretize_prior(&ex.prior, ex.scheme)?,
            horizon: ex.horizon,
            constraint: ex.constraint.clone(),
            fast_path: ex.fast_path,
            prior: Some(ex.prior.clone()),
        };
        problem.validate()?;
        Ok(problem)
    }
}
