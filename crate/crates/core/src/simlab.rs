//! Simulation studies: RMSE of designs and estimators on subsamples of a
//! source panel, power curves of the permutation tests, and penalty
//! selection.
//!
//! Every simulation derives its own RNG stream from `(seed, sim)`, so the
//! results do not depend on the thread count.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{self, EffectEstimate, Method};
use crate::inference::{self, Refit, Scheme, TestOptions};
use crate::objectives::Variant;
use crate::panel::{Panel, TreatmentScenario};
use crate::selector::{self, Design, DesignProblem, SearchMode};
use crate::weights::WeightConstraints;

/// Replacement for a zero variance-based penalty.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// Where simulations take their data from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Every simulation subsamples the same panel.
    Fixed(Panel),
    /// Every simulation draws a fresh panel from [`fallback_panel`], so
    /// simulations are independent.
    Fallback { seed: u64 },
}

impl DataSource {
    /// Panel used by simulation `sim`.
    pub fn panel(&self, sim: usize) -> std::borrow::Cow<'_, Panel> {
        match self {
            DataSource::Fixed(p) => std::borrow::Cow::Borrowed(p),
            DataSource::Fallback { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed ^ FALLBACK_SALT);
                rng.set_stream(sim as u64);
                std::borrow::Cow::Owned(fallback_panel(rng.next_u64()))
            }
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            DataSource::Fixed(p) => (p.n_units(), p.n_periods()),
            DataSource::Fallback { .. } => (FALLBACK_UNITS, FALLBACK_PERIODS),
        }
    }
}

const FALLBACK_UNITS: usize = 50;
const FALLBACK_PERIODS: usize = 40;
/// Keeps per-simulation panel seeds apart from the subsample streams.
const FALLBACK_SALT: u64 = 0x5eed_fa11_bac4_da7a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EffectMode {
    Homogeneous { tau: f64 },
    /// Linear in subsample row, from 0 to `2·mean`.
    HeterogeneousLinear { mean: f64 },
    /// Treated units in ascending order get effects spread evenly from 0
    /// to `tau` (for three units: 0, τ/2, τ).
    PowerStudy { tau: f64 },
}

impl EffectMode {
    /// Per-unit effects for a subsample of `n` units.
    pub fn effects(&self, n: usize, treated: &[usize]) -> Vec<f64> {
        match *self {
            EffectMode::Homogeneous { tau } => vec![tau; n],
            EffectMode::HeterogeneousLinear { mean } => {
                (0..n)
                    .map(|i| if n == 1 { mean } else { 2.0 * mean * i as f64 / (n - 1) as f64 })
                    .collect()
            }
            EffectMode::PowerStudy { tau } => {
                let mut e = vec![0.0; n];
                let k = treated.len();
                for (r, &i) in treated.iter().enumerate() {
                    e[i] = if k == 1 { tau } else { tau * r as f64 / (k - 1) as f64 };
                }
                e
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LambdaRule {
    VarianceAvg,
    CrossValidation { grid: Vec<f64>, split: usize },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_sims: usize,
    pub sub_units: usize,
    pub sub_periods: usize,
    pub t_pre: usize,
    pub k: usize,
    pub effect_mode: EffectMode,
    pub methods: Vec<Method>,
    pub lambda_rule: LambdaRule,
    pub constraints: WeightConstraints,
    pub mode: SearchMode,
    pub enum_limit: u128,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_sims: 500,
            sub_units: 10,
            sub_periods: 10,
            t_pre: 7,
            k: 3,
            effect_mode: EffectMode::Homogeneous { tau: 0.05 },
            methods: Method::ALL.to_vec(),
            lambda_rule: LambdaRule::VarianceAvg,
            constraints: WeightConstraints::SIMPLEX,
            mode: SearchMode::Auto,
            enum_limit: 200_000,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self, source: &DataSource) -> Result<()> {
        let (n, s) = source.shape();
        if self.n_sims == 0 || self.methods.is_empty() {
            return Err(Error::usage("need at least one simulation and one method"));
        }
        if self.sub_periods <= self.t_pre || self.t_pre == 0 {
            return Err(Error::usage("need 1 ≤ t_pre < sub_periods"));
        }
        if self.k == 0 || self.k >= self.sub_units {
            return Err(Error::usage("need 1 ≤ K < sub_units"));
        }
        if self.sub_units > n || self.sub_periods > s {
            return Err(Error::usage(format!(
                "subsample {}x{} exceeds source {}x{}",
                self.sub_units, self.sub_periods, n, s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub n_sims: usize,
    pub sub_units: usize,
    /// Window length; `None` takes every source period.
    pub sub_periods: Option<usize>,
    pub t_post: usize,
    pub k: usize,
    pub taus: Vec<f64>,
    pub methods: Vec<Method>,
    pub schemes: Vec<Scheme>,
    pub n_draws: usize,
    pub alpha: f64,
    /// Re-estimation on permuted samples; re-selecting the treated set
    /// keeps the size under control for optimized designs.
    pub refit: Refit,
    pub lambda_rule: LambdaRule,
    pub constraints: WeightConstraints,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            n_sims: 100,
            sub_units: 10,
            sub_periods: None,
            t_post: 5,
            k: 3,
            taus: vec![0.0, 0.01, 0.02, 0.03, 0.04],
            methods: vec![Method::PerUnit, Method::TwoWay, Method::OneWay],
            schemes: Scheme::ALL.to_vec(),
            n_draws: 40,
            alpha: 0.1,
            refit: Refit::Design,
            lambda_rule: LambdaRule::VarianceAvg,
            constraints: WeightConstraints::SIMPLEX,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub atet_rmse: f64,
    pub unit_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub sim: usize,
    pub subsample_seed: u64,
    pub method: Method,
    pub design_seed: u64,
    pub lambda: f64,
    pub treated: Vec<usize>,
    pub atet: f64,
    pub atet_rmse: f64,
    pub unit_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub method: Method,
    pub scheme: Scheme,
    pub tau: f64,
    pub rejections: usize,
    pub n_sims: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub sim: usize,
    pub method: Method,
    pub scheme: Scheme,
    pub tau: f64,
    pub treated: Vec<usize>,
    pub observed_stat: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub n_sims: usize,
    pub rows: Vec<MethodSummary>,
    pub records: Vec<SimRecord>,
    pub power: Vec<PowerPoint>,
    pub power_records: Vec<PowerRecord>,
    pub warnings: Vec<String>,
}

impl SimulationReport {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn power_curve(&self, method: Method, scheme: Scheme) -> Vec<&PowerPoint> {
        self.power
            .iter()
            .filter(|p| p.method == method && p.scheme == scheme)
            .collect()
    }

    /// One row per method × metric.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "metric", "value"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([r.method.as_str(), "atet_rmse", &r.atet_rmse.to_string()])
                .map_err(csv_err)?;
            w.write_record([r.method.as_str(), "unit_rmse", &r.unit_rmse.to_string()])
                .map_err(csv_err)?;
        }
        for p in &self.power {
            let metric = format!("rejection_rate[{}|tau={}]", p.scheme, p.tau);
            w.write_record([p.method.as_str(), &metric, &p.rate.to_string()])
                .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Plot-ready power curves.
    pub fn power_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "scheme", "tau", "rejection_rate", "rejections", "n_sims"])
            .map_err(csv_err)?;
        for p in &self.power {
            w.write_record([
                p.method.as_str(),
                p.scheme.as_str(),
                &p.tau.to_string(),
                &p.rate.to_string(),
                &p.rejections.to_string(),
                &p.n_sims.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Line chart of rejection rate against τ, one line per method ×
    /// scheme.
    pub fn power_svg(&self) -> String {
        let (width, height, pad) = (640.0, 420.0, 50.0);
        let taus: Vec<f64> = self.power.iter().map(|p| p.tau).collect();
        let tmax = taus.iter().cloned().fold(0.0, f64::max).max(1e-12);
        let x = |t: f64| pad + (width - 2.0 * pad) * t / tmax;
        let y = |r: f64| height - pad - (height - 2.0 * pad) * r;
        let colors = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            height - pad,
            width - pad,
            height - pad
        );
        let _ = writeln!(svg, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, height - pad);
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#,
                pad - 6.0,
                y(tick) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">effect size</text>"#,
            width / 2.0,
            height - 12.0
        );
        let mut series: Vec<(Method, Scheme)> = Vec::new();
        for p in &self.power {
            if !series.contains(&(p.method, p.scheme)) {
                series.push((p.method, p.scheme));
            }
        }
        for (n, &(m, s)) in series.iter().enumerate() {
            let color = colors[n % colors.len()];
            let points: Vec<String> = self
                .power_curve(m, s)
                .iter()
                .map(|p| format!("{:.2},{:.2}", x(p.tau), y(p.rate)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}">{m} / {s}</text>"#,
                width - pad - 140.0,
                pad + 16.0 * n as f64
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv write failed: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

/// Mean over units of the population variance of each pre-period row.
pub fn select_lambda_variance(pre: &DMatrix<f64>) -> f64 {
    let (n, t) = (pre.nrows(), pre.ncols());
    if n == 0 || t == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            let row = pre.row(i);
            let m = row.sum() / t as f64;
            row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64
        })
        .sum();
    total / n as f64
}

/// Replaces a degenerate zero penalty by [`LAMBDA_FLOOR`], with a warning.
pub fn usable_lambda(lambda: f64, warnings: &mut Vec<String>) -> f64 {
    if lambda > 0.0 {
        lambda
    } else {
        let msg = format!("penalty {lambda} is degenerate; using {LAMBDA_FLOOR}");
        log::warn!("{msg}");
        warnings.push(msg);
        LAMBDA_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCv {
    pub lambda: f64,
    /// `(λ, validation RMSE)` in ascending λ.
    pub scores: Vec<(f64, f64)>,
}

/// Cross-validated penalty: designs (treated set and weights) are chosen
/// on the first `split` pre periods, then scored by the RMSE of the
/// placebo effect over the remaining pre periods, where the true effect
/// is zero. Ties go to the smaller λ.
pub fn select_lambda_cv(panel: &Panel, grid: &[f64], split: usize, variant: Variant, k: usize, seed: u64) -> Result<LambdaCv> {
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::usage("λ grid must be nonempty with positive finite entries"));
    }
    if split == 0 || split >= panel.t_pre() {
        return Err(Error::usage(format!(
            "validation split {split} must lie in 1..{}",
            panel.t_pre()
        )));
    }
    let all: Vec<usize> = (0..panel.n_units()).collect();
    let train = panel.select(&all, 0, panel.t_pre(), split)?;
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let scores = lambdas
        .par_iter()
        .map(|&lambda| {
            let problem = DesignProblem::new(variant, k, lambda).with_seed(seed);
            let design = selector::select_design(&train, &problem)?;
            let est = estimators::estimate(&train, &design, Method::from(variant))?;
            let mse = est.per_period_atet.iter().map(|e| e * e).sum::<f64>() / est.per_period_atet.len() as f64;
            Ok((lambda, mse.sqrt()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 < best.1 {
            best = s;
        }
    }
    Ok(LambdaCv {
        lambda: best.0,
        scores,
    })
}

fn lambda_for(rule: &LambdaRule, panel: &Panel, variant: Variant, k: usize, seed: u64, warnings: &mut Vec<String>) -> Result<f64> {
    let raw = match rule {
        LambdaRule::Fixed { value } => {
            if !(*value > 0.0) {
                return Err(Error::usage("fixed λ must be positive"));
            }
            *value
        }
        LambdaRule::VarianceAvg => select_lambda_variance(&panel.pre()),
        LambdaRule::CrossValidation { grid, split } => select_lambda_cv(panel, grid, *split, variant, k, seed)?.lambda,
    };
    Ok(usable_lambda(raw, warnings))
}

/// Seeds for one simulation: the subsample, then one per method in
/// `Method::ALL` order so adding methods never shifts the others.
fn sim_seeds(seed: u64, sim: usize) -> (u64, [u64; 5]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sim as u64);
    let sub = rng.next_u64();
    let mut per_method = [0u64; 5];
    for s in per_method.iter_mut() {
        *s = rng.next_u64();
    }
    (sub, per_method)
}

fn method_slot(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).unwrap_or(0)
}

/// Treated set plus fitted weights for one method on a subsample.
#[allow(clippy::too_many_arguments)]
fn design_for(
    panel: &Panel,
    method: Method,
    k: usize,
    lambda: f64,
    cons: &WeightConstraints,
    mode: SearchMode,
    enum_limit: u128,
    seed: u64,
) -> Result<Design> {
    match method.variant() {
        Some(variant) if method.is_optimized() => {
            let mut problem = DesignProblem::new(variant, k, lambda)
                .with_constraints(*cons)
                .with_mode(mode)
                .with_seed(seed);
            problem.enum_limit = enum_limit;
            selector::select_design(panel, &problem)
        }
        _ => {
            let d = selector::random_design(panel.n_units(), k, seed)?;
            let mut d = estimators::fit_weights(panel, &d, method, lambda, cons)?;
            d.lambda = Some(lambda);
            d.constraints = Some(*cons);
            Ok(d)
        }
    }
}

fn errors(est: &EffectEstimate, effects: &[f64], treated: &[usize]) -> (f64, f64) {
    let truth = treated.iter().map(|&i| effects[i]).sum::<f64>() / treated.len() as f64;
    let p = est.per_period_atet.len() as f64;
    let atet = est.per_period_atet.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / p;
    let mut unit = 0.0;
    let mut count = 0.0;
    for &i in treated {
        for e in &est.unit_period_effects[&i] {
            unit += (e - effects[i]).powi(2);
            count += 1.0;
        }
    }
    (atet.sqrt(), (unit / count).sqrt())
}

/// RMSE study: per simulation, subsample, design each method, add the
/// effects to the treated units' post periods and score the estimates.
pub fn run_rmse_experiment(source: &Panel, config: &SimConfig) -> Result<SimulationReport> {
    run_rmse_study(&DataSource::Fixed(source.clone()), config)
}

pub fn run_rmse_study(source: &DataSource, config: &SimConfig) -> Result<SimulationReport> {
    config.validate(source)?;
    let n_post = config.sub_periods - config.t_pre;
    let per_sim = (0..config.n_sims)
        .into_par_iter()
        .map(|sim| -> Result<(Vec<SimRecord>, Vec<String>)> {
            let (sub_seed, method_seeds) = sim_seeds(config.seed, sim);
            let sub = source
                .panel(sim)
                .subsample(config.sub_units, config.sub_periods, config.t_pre, sub_seed)?;
            let mut warnings = Vec::new();
            let mut lambdas: Vec<(Variant, f64)> = Vec::new();
            let mut records = Vec::with_capacity(config.methods.len());
            for &method in &config.methods {
                let design_seed = method_seeds[method_slot(method)];
                let variant = method.variant().unwrap_or(Variant::PerUnit);
                let lambda = match lambdas.iter().find(|(v, _)| *v == variant) {
                    Some(&(_, l)) => l,
                    None => {
                        let l = lambda_for(&config.lambda_rule, &sub, variant, config.k, design_seed, &mut warnings)?;
                        lambdas.push((variant, l));
                        l
                    }
                };
                let design = design_for(
                    &sub,
                    method,
                    config.k,
                    lambda,
                    &config.constraints,
                    config.mode,
                    config.enum_limit,
                    design_seed,
                )?;
                let effects = config.effect_mode.effects(sub.n_units(), design.treated());
                let treated_panel = sub.apply_effects(design.treated(), &TreatmentScenario::new(effects.clone(), n_post)?)?;
                let est = estimators::estimate(&treated_panel, &design, method)?;
                let (atet_rmse, unit_rmse) = errors(&est, &effects, design.treated());
                records.push(SimRecord {
                    sim,
                    subsample_seed: sub_seed,
                    method,
                    design_seed,
                    lambda,
                    treated: design.treated().to_vec(),
                    atet: est.atet,
                    atet_rmse,
                    unit_rmse,
                });
            }
            Ok((records, warnings))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = SimulationReport {
        seed: config.seed,
        n_sims: config.n_sims,
        ..Default::default()
    };
    for (records, warnings) in per_sim {
        report.records.extend(records);
        report.warnings.extend(warnings);
    }
    for &method in &config.methods {
        let mine: Vec<&SimRecord> = report.records.iter().filter(|r| r.method == method).collect();
        let n = mine.len() as f64;
        report.rows.push(MethodSummary {
            method,
            atet_rmse: mine.iter().map(|r| r.atet_rmse).sum::<f64>() / n,
            unit_rmse: mine.iter().map(|r| r.unit_rmse).sum::<f64>() / n,
        });
    }
    Ok(report)
}

/// Power study: per simulation and method the design is fixed, effects
/// `EffectMode::PowerStudy` are added in the last `t_post` periods for
/// every τ, and each permutation scheme is run.
pub fn run_power_experiment(source: &Panel, config: &PowerConfig) -> Result<SimulationReport> {
    run_power_study(&DataSource::Fixed(source.clone()), config)
}

pub fn run_power_study(source: &DataSource, config: &PowerConfig) -> Result<SimulationReport> {
    let (n_source, s_source) = source.shape();
    let periods = config.sub_periods.unwrap_or(s_source);
    if config.n_sims == 0 || config.methods.is_empty() || config.schemes.is_empty() || config.taus.is_empty() {
        return Err(Error::usage("power study needs sims, methods, schemes and effect sizes"));
    }
    if config.t_post == 0 || config.t_post >= periods {
        return Err(Error::usage("need 1 ≤ t_post < periods"));
    }
    if config.k == 0 || config.k >= config.sub_units || config.sub_units > n_source || periods > s_source {
        return Err(Error::usage("power study dimensions do not fit the source panel"));
    }
    let t_pre = periods - config.t_post;

    let per_sim = (0..config.n_sims)
        .into_par_iter()
        .map(|sim| -> Result<(Vec<PowerRecord>, Vec<String>)> {
            let (sub_seed, method_seeds) = sim_seeds(config.seed, sim);
            let sub = source.panel(sim).subsample(config.sub_units, periods, t_pre, sub_seed)?;
            let mut warnings = Vec::new();
            let mut out = Vec::new();
            for &method in &config.methods {
                let design_seed = method_seeds[method_slot(method)];
                let variant = method.variant().unwrap_or(Variant::PerUnit);
                let lambda = lambda_for(&config.lambda_rule, &sub, variant, config.k, design_seed, &mut warnings)?;
                let design = design_for(
                    &sub,
                    method,
                    config.k,
                    lambda,
                    &config.constraints,
                    SearchMode::Auto,
                    200_000,
                    design_seed,
                )?;
                for &tau in &config.taus {
                    let effects = EffectMode::PowerStudy { tau }.effects(sub.n_units(), design.treated());
                    let panel = sub.apply_effects(design.treated(), &TreatmentScenario::new(effects, config.t_post)?)?;
                    for &scheme in &config.schemes {
                        let opts = TestOptions {
                            scheme,
                            n_draws: config.n_draws,
                            alpha: config.alpha,
                            seed: design_seed,
                            refit: config.refit,
                        };
                        let test = inference::permutation_test_with(&panel, &design, method, &opts)?;
                        warnings.extend(test.warnings.iter().cloned());
                        out.push(PowerRecord {
                            sim,
                            method,
                            scheme,
                            tau,
                            treated: design.treated().to_vec(),
                            observed_stat: test.observed_stat,
                            p_value: test.p_value,
                            reject: test.reject,
                        });
                    }
                }
            }
            Ok((out, warnings))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = SimulationReport {
        seed: config.seed,
        n_sims: config.n_sims,
        ..Default::default()
    };
    for (records, warnings) in per_sim {
        report.power_records.extend(records);
        for w in warnings {
            if !report.warnings.contains(&w) {
                report.warnings.push(w);
            }
        }
    }
    for &method in &config.methods {
        for &scheme in &config.schemes {
            for &tau in &config.taus {
                let rejections = report
                    .power_records
                    .iter()
                    .filter(|r| r.method == method && r.scheme == scheme && r.tau == tau && r.reject)
                    .count();
                report.power.push(PowerPoint {
                    method,
                    scheme,
                    tau,
                    rejections,
                    n_sims: config.n_sims,
                    rate: rejections as f64 / config.n_sims as f64,
                });
            }
        }
    }
    Ok(report)
}

/// Offline stand-in for a state-level unemployment-rate panel:
/// 50 units × 40 monthly periods from a seeded two-factor model.
///
/// Unit levels are uniform on `[0.03, 0.09]`. Two common factors enter
/// with unit-specific loadings; idiosyncratic noise has standard
/// deviation 0.004. Factors and noise are drawn independently across
/// periods, so the cross-section at each period is exchangeable over
/// time.
pub fn fallback_panel(seed: u64) -> Panel {
    let (n, s) = (FALLBACK_UNITS, FALLBACK_PERIODS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = Uniform::new(0.03, 0.09);
    let load = Uniform::new(0.5, 1.5);
    let std = Normal::new(0.0, 1.0).expect("unit normal");

    let f1: Vec<f64> = (0..s).map(|_| 0.006 * std.sample(&mut rng)).collect();
    let f2: Vec<f64> = (0..s).map(|_| 0.003 * std.sample(&mut rng)).collect();
    let mut values = DMatrix::zeros(n, s);
    for i in 0..n {
        let a = level.sample(&mut rng);
        let b1 = load.sample(&mut rng);
        let b2: f64 = std.sample(&mut rng);
        for t in 0..s {
            values[(i, t)] = a + b1 * f1[t] + b2 * f2[t] + 0.004 * std.sample(&mut rng);
        }
    }
    let unit_ids = (0..n).map(|i| format!("unit{i:02}")).collect();
    let period_ids = (0..s).map(|t| format!("{}-{:02}", 2000 + t / 12, t % 12 + 1)).collect();
    Panel::new(unit_ids, period_ids, values, s - 5).expect("fallback panel is well formed")
}
