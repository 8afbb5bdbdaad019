//! The five subcommands.

use std::path::{Path, PathBuf};

use infodesign::bounds::{itb_bcrb_gap_demo, kt_lower_bound, BoundReport};
use infodesign::design::{initial_signal, optimize_signal, ActiveConstraint, InitStrategy, ObjectiveKind};
use infodesign::estimation::{compare_signals, format_float, map_estimate};
use infodesign::model::examples::{larmor_hz, ExampleSetup};
use infodesign::model::{sample_prior, simulate, InputSignal};
use infodesign::seed::derive_seed;
use serde::Serialize;

use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::io::{csv, indexed_columns, json, read_series, read_signal, series_rows, write_file};

const STREAM_SIM_THETA: u64 = 0x51;
const STREAM_SIM_NOISE: u64 = 0x52;

pub struct Context {
    pub loaded: Loaded,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn digest(&self) -> &str {
        &self.loaded.digest
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn setup(&self) -> CliResult<ExampleSetup> {
        self.loaded.config.setup()
    }
}

fn is_sensor(ex: &ExampleSetup) -> bool {
    matches!(ex.name.as_str(), "atomic_oscillator" | "opm_reduced")
}

#[derive(Serialize)]
struct DesignSummary {
    objective_kind: ObjectiveKind,
    objective: f64,
    iterations: usize,
    best_start: usize,
    start_objectives: Vec<f64>,
    active: ActiveConstraint,
}

#[derive(Serialize)]
struct BoundFile {
    config_digest: String,
    seed: u64,
    model: String,
    horizon: usize,
    bound: BoundReport,
    design: DesignSummary,
}

pub fn design(ctx: &Context) -> CliResult<()> {
    let ex = ctx.setup()?;
    let problem = ctx.loaded.config.problem(&ex)?;
    let mut options = ctx.loaded.config.design.clone();
    options.seed = ctx.seed();
    let result = optimize_signal(&problem, &options)?;
    let bound = kt_lower_bound(&problem, &result.u_star)?;
    let nu = result.u_star.input_dim;

    let mut cols = vec!["k".to_string()];
    cols.extend(indexed_columns("u", nu));
    write_file(&ctx.path("signal.csv"), &csv(ctx.digest(), ctx.seed(), &cols, series_rows(&result.u_star.values, nu)))?;

    let trace_cols: Vec<String> = ["iter", "objective", "grad_norm", "step"].iter().map(|s| s.to_string()).collect();
    let rows = result.trace.iter().map(|t| {
        vec![t.iter.to_string(), format_float(t.objective), format_float(t.grad_norm), format_float(t.step)]
    });
    write_file(&ctx.path("trace.csv"), &csv(ctx.digest(), ctx.seed(), &trace_cols, rows))?;

    let file = BoundFile {
        config_digest: ctx.digest().to_string(),
        seed: ctx.seed(),
        model: ex.name.clone(),
        horizon: ex.horizon,
        bound,
        design: DesignSummary {
            objective_kind: options.objective,
            objective: result.objective,
            iterations: result.trace.len().saturating_sub(1),
            best_start: result.best_start,
            start_objectives: result.start_objectives.clone(),
            active: result.active,
        },
    };
    write_file(&ctx.path("bound.json"), &json(&file))?;
    println!(
        "design: objective {} after {} iterations (start {}), I_l = {} nats, floor = {}",
        format_float(result.objective),
        file.design.iterations,
        result.best_start,
        format_float(file.bound.i_l),
        format_float(file.bound.itb_floor)
    );
    Ok(())
}

#[derive(Serialize)]
struct TruthFile {
    config_digest: String,
    seed: u64,
    theta: Vec<f64>,
}

pub fn simulate_cmd(ctx: &Context, signal: &Path) -> CliResult<()> {
    let ex = ctx.setup()?;
    let u = read_signal(signal)?;
    check_horizon(&ex, &u, signal)?;
    let theta = match &ctx.loaded.config.simulate.theta {
        Some(t) => t.clone(),
        None => sample_prior(&ex.prior, derive_seed(ctx.seed(), 0, STREAM_SIM_THETA))?,
    };
    if theta.len() != ex.model.dims().theta {
        return Err(CliError::Config(format!("simulate.theta needs {} entries", ex.model.dims().theta)));
    }
    let traj = simulate(ex.model.as_ref(), &theta, &u, derive_seed(ctx.seed(), 0, STREAM_SIM_NOISE))?;
    let ny = ex.model.dims().output;
    let mut cols = vec!["k".to_string()];
    cols.extend(indexed_columns("y", ny));
    let body = csv(ctx.digest(), ctx.seed(), &cols, series_rows(&traj.stacked_outputs(), ny));
    write_file(&ctx.path("observations.csv"), &body)?;
    let truth = TruthFile { config_digest: ctx.digest().to_string(), seed: ctx.seed(), theta };
    write_file(&ctx.path("truth.json"), &json(&truth))?;
    println!("simulate: {} samples at θ = {:?}", traj.outputs.len(), truth.theta);
    Ok(())
}

fn check_horizon(ex: &ExampleSetup, u: &InputSignal, path: &Path) -> CliResult<()> {
    if u.input_dim != ex.model.dims().input {
        return Err(CliError::Config(format!(
            "{}: signal has {} input columns, model `{}` has {}",
            path.display(),
            u.input_dim,
            ex.name,
            ex.model.dims().input
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateFile {
    config_digest: String,
    seed: u64,
    theta_hat: Vec<f64>,
    neg_log_posterior: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    larmor_hz: Option<f64>,
}

pub fn estimate(ctx: &Context, signal: &Path, observations: &Path) -> CliResult<()> {
    let ex = ctx.setup()?;
    let u = read_signal(signal)?;
    check_horizon(&ex, &u, signal)?;
    let (width, y) = read_series(observations)?;
    let ny = ex.model.dims().output;
    if width != ny {
        return Err(CliError::Config(format!("{}: expected {ny} output columns, found {width}", observations.display())));
    }
    let rows = y.len() / ny;
    if rows != u.horizon() + 1 {
        return Err(CliError::Csv {
            path: observations.display().to_string(),
            line: rows + 2,
            msg: format!("expected {} observation rows for a signal of length {}, found {rows}", u.horizon() + 1, u.horizon()),
        });
    }
    let est = map_estimate(ex.model.as_ref(), &ex.prior, &y, &u, &ctx.loaded.config.estimation)?;
    let file = EstimateFile {
        config_digest: ctx.digest().to_string(),
        seed: ctx.seed(),
        larmor_hz: is_sensor(&ex).then(|| larmor_hz(est.theta[0])),
        theta_hat: est.theta,
        neg_log_posterior: est.neg_log_posterior,
    };
    let body = json(&file);
    write_file(&ctx.path("estimate.json"), &body)?;
    print!("{body}");
    Ok(())
}

#[derive(Serialize)]
struct SignalSummary {
    signal: String,
    trials: usize,
    mse: f64,
    stderr: f64,
    seed: u64,
    theta_digest: String,
    i_l: f64,
    itb_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_larmor_hz: Option<f64>,
}

#[derive(Serialize)]
struct McSummary {
    config_digest: String,
    seed: u64,
    paired: bool,
    signals: Vec<SignalSummary>,
}

/// A signal file, or `builtin:zero|constant|harmonic|random`.
fn resolve_signal(ctx: &Context, ex: &ExampleSetup, arg: &str) -> CliResult<(String, InputSignal)> {
    if let Some(kind) = arg.strip_prefix("builtin:") {
        let strategy = match kind {
            "zero" => InitStrategy::Zero,
            "constant" => InitStrategy::Constant,
            "harmonic" => InitStrategy::Harmonic,
            "random" => InitStrategy::Random,
            other => return Err(CliError::Config(format!("unknown builtin signal `{other}`"))),
        };
        let problem = ctx.loaded.config.problem(ex)?;
        return Ok((kind.to_string(), initial_signal(&problem, strategy, derive_seed(ctx.seed(), 0, 0xB1))));
    }
    let path = Path::new(arg);
    let u = read_signal(path)?;
    check_horizon(ex, &u, path)?;
    let name = path.file_stem().map_or(arg.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, u))
}

pub fn montecarlo(ctx: &Context, args: &[String]) -> CliResult<()> {
    let ex = ctx.setup()?;
    let mut signals = Vec::new();
    for s in args {
        let (mut name, u) = resolve_signal(ctx, &ex, s)?;
        while signals.iter().any(|(n, _): &(String, InputSignal)| *n == name) {
            name.push('\'');
        }
        signals.push((name, u));
    }
    let problem = infodesign::bounds::MixtureDesignProblem {
        horizon: signals[0].1.horizon(),
        constraint: match &ex.constraint {
            c if c.len() == signals[0].1.values.len() => c.clone(),
            _ => infodesign::model::SignalConstraint::ball_at_origin(signals[0].1.values.len(), f64::MAX.sqrt()),
        },
        ..ctx.loaded.config.problem(&ex)?
    };
    let trials = ctx.loaded.config.montecarlo.trials;
    let cmp = compare_signals(ex.model.as_ref(), &ex.prior, &signals, trials, ctx.seed(), &ctx.loaded.config.estimation)?;
    let mut summaries = Vec::new();
    for ((name, u), r) in signals.iter().zip(&cmp.reports) {
        let b = kt_lower_bound(&problem, u)?;
        summaries.push(SignalSummary {
            signal: name.clone(),
            trials: r.trials,
            mse: r.mse,
            stderr: r.stderr,
            seed: r.seed,
            theta_digest: r.theta_digest.clone(),
            i_l: b.i_l,
            itb_floor: b.itb_floor,
            rmse_larmor_hz: is_sensor(&ex).then(|| larmor_hz(r.mse.sqrt())),
        });
    }
    let paired = summaries.windows(2).all(|w| w[0].theta_digest == w[1].theta_digest);
    let mut body = crate::io::header_line(ctx.digest(), ctx.seed());
    body += &cmp.to_csv();
    write_file(&ctx.path("compare.csv"), &body)?;
    for s in &summaries {
        println!(
            "montecarlo: {:<16} mse {} ± {}  floor {}",
            s.signal,
            format_float(s.mse),
            format_float(s.stderr),
            format_float(s.itb_floor)
        );
    }
    let summary = McSummary { config_digest: ctx.digest().to_string(), seed: ctx.seed(), paired, signals: summaries };
    write_file(&ctx.path("summary.json"), &json(&summary))?;
    Ok(())
}

pub fn demo_itb_gap(ctx: &Context, alphas: Option<Vec<f64>>) -> CliResult<()> {
    let gap = &ctx.loaded.config.gap;
    let alphas = alphas.unwrap_or_else(|| gap.alphas.clone());
    if alphas.is_empty() {
        return Err(CliError::Config("no alpha values given".into()));
    }
    let mut rows = Vec::new();
    for &a in &alphas {
        let r = itb_bcrb_gap_demo(a, gap.grid)?;
        if !r.jp_bound_holds {
            eprintln!("demo-itb-gap: J_P = {} is below alpha/(2 sqrt(pi)) at alpha = {a}", format_float(r.j_p));
        }
        rows.push(vec![
            format_float(r.alpha),
            format_float(r.j_p),
            format_float(r.j_d),
            format_float(r.bcrb_floor),
            format_float(r.itb_floor),
            r.jp_bound_holds.to_string(),
        ]);
    }
    let cols: Vec<String> =
        ["alpha", "j_p", "j_d", "bcrb_floor", "itb_floor", "jp_bound_holds"].iter().map(|s| s.to_string()).collect();
    write_file(&ctx.path("gap.csv"), &csv(ctx.digest(), ctx.seed(), &cols, rows))?;
    println!("demo-itb-gap: {} rows written to {}", alphas.len(), ctx.path("gap.csv").display());
    Ok(())
}
