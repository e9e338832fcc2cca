//! Command-line front end.
//!
//! Every run writes a manifest next to its main output holding the
//! canonical argument list, the tool version and SHA-256 digests of the
//! inputs and outputs. `replay --manifest FILE` re-runs those arguments
//! and checks the outputs against the recorded digests.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{self, Method};
use crate::inference::{self, Refit, Scheme, TestOptions};
use crate::mip;
use crate::objectives::Variant;
use crate::panel::{load_panel, Panel};
use crate::selector::{self, Design, DesignProblem, SearchMode};
use crate::simlab::{self, DataSource, EffectMode, LambdaRule, PowerConfig, SimConfig};
use crate::weights::WeightConstraints;

#[derive(Debug, Parser)]
#[command(name = "synthdesign", version, about = "Experimental design for panel data", args_override_self = true)]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file whose keys are flags of the chosen subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select treated units and weights.
    Design(DesignArgs),
    /// Estimate effects for a design.
    Estimate(EstimateArgs),
    /// Permutation test for a design.
    Infer(InferArgs),
    /// RMSE or power simulation study.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LambdaRuleArg {
    Variance,
    Cv,
    Fixed,
}

#[derive(Debug, Clone, Args)]
pub struct PanelArgs {
    /// Wide panel CSV: header of period labels, one row per unit.
    #[arg(long)]
    pub input: PathBuf,

    /// Number of pre-treatment periods.
    #[arg(long)]
    pub t_pre: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    /// Fixed penalty; implies `--lambda-rule fixed`.
    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, value_enum, default_value = "variance")]
    pub lambda_rule: LambdaRuleArg,

    /// Candidate penalties for cross-validation.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2])]
    pub cv_grid: Vec<f64>,

    /// Training periods for cross-validation (default: half the pre block).
    #[arg(long)]
    pub cv_split: Option<usize>,
}

impl LambdaArgs {
    fn rule(&self, t_pre: usize) -> Result<LambdaRule> {
        if let Some(value) = self.lambda {
            return Ok(LambdaRule::Fixed { value });
        }
        Ok(match self.lambda_rule {
            LambdaRuleArg::Variance => LambdaRule::VarianceAvg,
            LambdaRuleArg::Cv => LambdaRule::CrossValidation {
                grid: self.cv_grid.clone(),
                split: self.cv_split.unwrap_or((t_pre / 2).max(1)),
            },
            LambdaRuleArg::Fixed => return Err(Error::usage("--lambda-rule fixed needs --lambda")),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub panel: PanelArgs,

    #[arg(long, default_value = "two-way")]
    pub variant: Variant,

    /// Number of treated units.
    #[arg(long)]
    pub k: usize,

    #[command(flatten)]
    pub lambda: LambdaArgs,

    #[arg(long, default_value = "auto")]
    pub mode: SearchMode,

    #[arg(long, default_value_t = 200_000)]
    pub enum_limit: u128,

    #[arg(long, default_value_t = 20)]
    pub restarts: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Drop the nonnegativity constraint on weights.
    #[arg(long)]
    pub signed: bool,

    /// Design JSON output.
    #[arg(long, default_value = "design.json")]
    pub out: PathBuf,

    /// Also write the mixed-integer model as MPS.
    #[arg(long)]
    pub export_mps: Option<PathBuf>,

    /// Also write the cardinality-free per-unit model as MPS.
    #[arg(long)]
    pub export_mps_cardinality_free: Option<PathBuf>,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub panel: PanelArgs,

    #[arg(long)]
    pub design: PathBuf,

    /// Estimator; defaults to the design's variant.
    #[arg(long)]
    pub method: Option<Method>,

    /// Penalty for refitting weights when the design carries none.
    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, default_value = "estimate.json")]
    pub out: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub panel: PanelArgs,

    #[arg(long)]
    pub design: PathBuf,

    #[arg(long)]
    pub method: Option<Method>,

    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, default_value = "moving-block")]
    pub scheme: Scheme,

    #[arg(long, default_value_t = 40)]
    pub draws: usize,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Re-fit `weights` only, or re-select the treated set (`design`).
    #[arg(long, default_value = "weights")]
    pub refit: Refit,

    #[arg(long, default_value = "test.json")]
    pub out: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Experiment {
    Rmse,
    Power,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EffectArg {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "rmse")]
    pub experiment: Experiment,

    /// Source panel CSV; without it each simulation draws a panel from
    /// the built-in two-factor model.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    #[arg(long, default_value_t = 500)]
    pub sims: usize,

    #[arg(long, default_value_t = 3)]
    pub k: usize,

    #[arg(long, default_value_t = 10)]
    pub sub_units: usize,

    /// Window length (RMSE study; the power study uses every period).
    #[arg(long, default_value_t = 10)]
    pub sub_periods: usize,

    /// Treated periods at the end of each window.
    #[arg(long)]
    pub t_post: Option<usize>,

    #[arg(long, value_enum, default_value = "homogeneous")]
    pub effect: EffectArg,

    /// Effect size (mean effect for the heterogeneous mode).
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,

    /// Effect grid for the power study.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.01, 0.02, 0.03, 0.04])]
    pub taus: Vec<f64>,

    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,

    #[arg(long, value_delimiter = ',', default_values_t = vec![Scheme::Iid, Scheme::MovingBlock])]
    pub schemes: Vec<Scheme>,

    #[arg(long, default_value_t = 40)]
    pub draws: usize,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    #[arg(long, default_value = "design")]
    pub refit: Refit,

    #[command(flatten)]
    pub lambda: LambdaArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Report CSV (one row per method × metric).
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,

    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,

    /// Plot-ready power curves.
    #[arg(long)]
    pub power_csv: Option<PathBuf>,

    /// Power curves as an SVG line chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Canonical arguments (config file expanded), without the program
    /// name.
    pub args: Vec<String>,
    /// Text of the TOML config, if one was used.
    pub config: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

fn default_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Inputs, outputs and where the manifest goes for one run.
struct RunRecord {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: PathBuf,
}

/// Expands `--config FILE` into flags placed right after the subcommand,
/// so flags given on the command line (which come later) win.
pub fn expand_config(args: &[String]) -> Result<(Vec<String>, Option<String>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config_path = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            let p = args.get(i + 1).ok_or_else(|| Error::usage("--config needs a path"))?;
            config_path = Some(p.clone());
            i += 2;
            continue;
        }
        if let Some(p) = args[i].strip_prefix("--config=") {
            config_path = Some(p.to_string());
            i += 1;
            continue;
        }
        rest.push(args[i].clone());
        i += 1;
    }
    let Some(path) = config_path else {
        return Ok((rest, None));
    };
    let text = read_text(Path::new(&path))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::usage(format!("config {path}: {e}")))?;
    let mut flags = Vec::new();
    for (key, value) in &table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => flags.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
                flags.push(flag);
                flags.push(parts.join(","));
            }
            other => {
                flags.push(flag);
                flags.push(scalar(other)?);
            }
        }
    }
    let sub = rest
        .iter()
        .position(|a| matches!(a.as_str(), "design" | "estimate" | "infer" | "simulate" | "replay"))
        .ok_or_else(|| Error::usage("--config needs a subcommand"))?;
    let mut out = rest[..=sub].to_vec();
    out.extend(flags);
    out.extend_from_slice(&rest[sub + 1..]);
    Ok((out, Some(text)))
}

fn scalar(v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(Error::usage(format!("unsupported config value {other}"))),
    }
}

/// Entry point: parses `argv` (program name first) and returns the exit
/// code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let (program, args) = match argv.split_first() {
        Some((p, rest)) => (p.clone(), rest.to_vec()),
        None => ("synthdesign".to_string(), Vec::new()),
    };
    let (args, config_text) = match expand_config(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(std::iter::once(program).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .try_init();
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, e.g. in-process reruns.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::info!("thread pool already initialized; --threads {n} ignored");
        }
    }
    match run(cli.command, &args, config_text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command, args: &[String], config: Option<String>) -> Result<()> {
    let (name, record) = match command {
        Command::Design(a) => ("design", cmd_design(&a)?),
        Command::Estimate(a) => ("estimate", cmd_estimate(&a)?),
        Command::Infer(a) => ("infer", cmd_infer(&a)?),
        Command::Simulate(a) => ("simulate", cmd_simulate(&a)?),
        Command::Replay(a) => return cmd_replay(&a),
    };
    let manifest = Manifest {
        tool: "synthdesign".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        args: args.to_vec(),
        config,
        inputs: record.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        outputs: record.outputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
    };
    write_text(&record.manifest, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn load(panel: &PanelArgs) -> Result<Panel> {
    load_panel(&read_text(&panel.input)?, panel.t_pre)
}

fn resolve_lambda(rule: &LambdaRule, panel: &Panel, variant: Variant, k: usize, seed: u64) -> Result<f64> {
    let raw = match rule {
        LambdaRule::Fixed { value } => *value,
        LambdaRule::VarianceAvg => simlab::select_lambda_variance(&panel.pre()),
        LambdaRule::CrossValidation { grid, split } => simlab::select_lambda_cv(panel, grid, *split, variant, k, seed)?.lambda,
    };
    Ok(simlab::usable_lambda(raw, &mut Vec::new()))
}

fn cmd_design(a: &DesignArgs) -> Result<RunRecord> {
    let panel = load(&a.panel)?;
    if a.k == 0 || a.k >= panel.n_units() {
        return Err(Error::usage(format!(
            "K = {} must satisfy 1 ≤ K ≤ N − 1 = {}",
            a.k,
            panel.n_units() - 1
        )));
    }
    let rule = a.lambda.rule(panel.t_pre())?;
    let lambda = resolve_lambda(&rule, &panel, a.variant, a.k, a.seed)?;
    let cons = if a.signed {
        WeightConstraints::SIGNED
    } else {
        WeightConstraints::SIMPLEX
    };
    let mut problem = DesignProblem::new(a.variant, a.k, lambda)
        .with_constraints(cons)
        .with_mode(a.mode)
        .with_seed(a.seed);
    problem.enum_limit = a.enum_limit;
    problem.restarts = a.restarts;

    let design = selector::select_design(&panel, &problem)?;
    write_text(&a.out, &(design.to_json()? + "\n"))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.export_mps {
        let (_, text) = mip::export_mip(&panel, &problem)?;
        write_text(path, &text)?;
        outputs.push(path.clone());
    }
    if let Some(path) = &a.export_mps_cardinality_free {
        let model = mip::build_cardinality_free_model(&panel, lambda)?;
        write_text(path, &mip::write_mps(&model))?;
        outputs.push(path.clone());
    }
    let names: Vec<&str> = design.treated().iter().map(|&i| panel.unit_ids()[i].as_str()).collect();
    println!(
        "treated: {}  objective: {}  lambda: {}  exact: {}",
        names.join(","),
        design.objective.unwrap_or(f64::NAN),
        lambda,
        design.exact
    );
    Ok(RunRecord {
        inputs: vec![a.panel.input.clone()],
        outputs,
        manifest: a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out)),
    })
}

fn method_and_design(panel: &Panel, path: &Path, method: Option<Method>, lambda: Option<f64>) -> Result<(Design, Method)> {
    let design = Design::from_json(&read_text(path)?)?;
    if design.n_units() != panel.n_units() {
        return Err(Error::data(format!(
            "design has {} units, panel has {}",
            design.n_units(),
            panel.n_units()
        )));
    }
    let method = match (method, design.variant) {
        (Some(m), _) => m,
        (None, Some(v)) => Method::from(v),
        (None, None) => return Err(Error::usage("design has no variant; pass --method")),
    };
    let mut design = design;
    if let Some(l) = lambda {
        design.lambda = Some(l);
    }
    Ok((design, method))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<RunRecord> {
    let panel = load(&a.panel)?;
    let (design, method) = method_and_design(&panel, &a.design, a.method, a.lambda)?;
    let matches = match (&design.weights, method.variant()) {
        (Some(_), Some(v)) => design.variant == Some(v),
        (_, None) => true,
        (None, Some(_)) => false,
    };
    let est = if matches && a.lambda.is_none() {
        estimators::estimate(&panel, &design, method)?
    } else {
        let lambda = design
            .lambda
            .ok_or_else(|| Error::usage("weights must be re-fitted; pass --lambda"))?;
        let cons = design.constraints.unwrap_or_default();
        estimators::fit_and_estimate(&panel, &design, method, lambda, &cons)?
    };
    write_text(&a.out, &(est.to_json()? + "\n"))?;
    println!("ATET ({}): {}", method, est.atet);
    Ok(RunRecord {
        inputs: vec![a.panel.input.clone(), a.design.clone()],
        outputs: vec![a.out.clone()],
        manifest: a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out)),
    })
}

fn cmd_infer(a: &InferArgs) -> Result<RunRecord> {
    let panel = load(&a.panel)?;
    let (design, method) = method_and_design(&panel, &a.design, a.method, a.lambda)?;
    let opts = TestOptions {
        scheme: a.scheme,
        n_draws: a.draws,
        alpha: a.alpha,
        seed: a.seed,
        refit: a.refit,
    };
    let test = inference::permutation_test_with(&panel, &design, method, &opts)?;
    write_text(&a.out, &(test.to_json()? + "\n"))?;
    println!(
        "statistic: {}  p-value: {}  reject at {}: {}  draws: {}",
        test.observed_stat, test.p_value, a.alpha, test.reject, test.n_draws
    );
    for w in &test.warnings {
        eprintln!("warning: {w}");
    }
    Ok(RunRecord {
        inputs: vec![a.panel.input.clone(), a.design.clone()],
        outputs: vec![a.out.clone()],
        manifest: a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out)),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<RunRecord> {
    let mut inputs = Vec::new();
    let source = match &a.input {
        Some(path) => {
            inputs.push(path.clone());
            // The cutoff is irrelevant here; every study sets its own.
            let text = read_text(path)?;
            let periods = text.lines().next().map_or(0, |h| h.split(',').count().saturating_sub(1));
            DataSource::Fixed(load_panel(&text, periods.max(1))?)
        }
        None => DataSource::Fallback { seed: a.data_seed },
    };
    let report = match a.experiment {
        Experiment::Rmse => {
            let t_post = a.t_post.unwrap_or(3);
            if t_post == 0 || t_post >= a.sub_periods {
                return Err(Error::usage("need 1 ≤ t-post < sub-periods"));
            }
            let t_pre = a.sub_periods - t_post;
            let config = SimConfig {
                n_sims: a.sims,
                sub_units: a.sub_units,
                sub_periods: a.sub_periods,
                t_pre,
                k: a.k,
                effect_mode: match a.effect {
                    EffectArg::Homogeneous => EffectMode::Homogeneous { tau: a.tau },
                    EffectArg::Heterogeneous => EffectMode::HeterogeneousLinear { mean: a.tau },
                },
                methods: if a.methods.is_empty() { Method::ALL.to_vec() } else { a.methods.clone() },
                lambda_rule: a.lambda.rule(t_pre)?,
                seed: a.seed,
                ..Default::default()
            };
            simlab::run_rmse_study(&source, &config)?
        }
        Experiment::Power => {
            let t_post = a.t_post.unwrap_or(5);
            let config = PowerConfig {
                n_sims: a.sims,
                sub_units: a.sub_units,
                sub_periods: None,
                t_post,
                k: a.k,
                taus: a.taus.clone(),
                methods: if a.methods.is_empty() {
                    vec![Method::PerUnit, Method::TwoWay, Method::OneWay]
                } else {
                    a.methods.clone()
                },
                schemes: a.schemes.clone(),
                n_draws: a.draws,
                alpha: a.alpha,
                refit: a.refit,
                lambda_rule: a.lambda.rule(40usize.saturating_sub(t_post))?,
                seed: a.seed,
                ..Default::default()
            };
            simlab::run_power_study(&source, &config)?
        }
    };
    write_text(&a.out, &report.to_csv()?)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.json {
        write_text(p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.power_csv {
        write_text(p, &report.power_csv()?)?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.svg {
        write_text(p, &report.power_svg())?;
        outputs.push(p.clone());
    }
    for r in &report.rows {
        println!("{:>10}  ATET RMSE {:.6}  unit RMSE {:.6}", r.method, r.atet_rmse, r.unit_rmse);
    }
    for p in &report.power {
        println!("{:>10}  {:<12} tau {:<6} rejection rate {}", p.method, p.scheme, p.tau, p.rate);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(RunRecord {
        inputs,
        outputs,
        manifest: a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out)),
    })
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let manifest: Manifest = serde_json::from_str(&read_text(&a.manifest)?)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for input in &manifest.inputs {
        let now = digest_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(Error::data(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("synthdesign".to_string()).chain(manifest.args.iter().cloned()))
        .map_err(|e| Error::usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::usage("manifest records a replay"));
    }
    run(cli.command, &manifest.args, manifest.config.clone())?;
    for output in &manifest.outputs {
        let now = digest_file(Path::new(&output.path))?;
        if now.sha256 != output.sha256 {
            return Err(Error::data(format!("replayed output {} differs from the recorded run", output.path)));
        }
    }
    println!("replayed {} output(s); all digests match", manifest.outputs.len());
    Ok(())
}
