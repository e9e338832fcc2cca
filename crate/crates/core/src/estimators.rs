//! Treatment-effect estimates from post-cutoff data.
//!
//! Every estimator is a fixed linear combination of post-period outcomes
//! once the design's weights are known, which is what the MSE oracle
//! exploits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Variant;
use crate::panel::Panel;
use crate::selector::Design;
use crate::weights::{self, WeightConstraints, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PerUnit,
    TwoWay,
    OneWay,
    /// Random treated set, per-unit synthetic-control weights.
    SyntheticControlRandom,
    /// Random treated set, equal weights.
    DiffInMeansRandom,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PerUnit,
        Method::TwoWay,
        Method::OneWay,
        Method::SyntheticControlRandom,
        Method::DiffInMeansRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::PerUnit => "per-unit",
            Method::TwoWay => "two-way",
            Method::OneWay => "one-way",
            Method::SyntheticControlRandom => "sc-random",
            Method::DiffInMeansRandom => "dim-random",
        }
    }

    /// Weight problem fitted for this method, if any.
    pub fn variant(&self) -> Option<Variant> {
        match self {
            Method::PerUnit | Method::SyntheticControlRandom => Some(Variant::PerUnit),
            Method::TwoWay => Some(Variant::TwoWay),
            Method::OneWay => Some(Variant::OneWay),
            Method::DiffInMeansRandom => None,
        }
    }

    /// True for methods whose treated set comes from the design optimizer.
    pub fn is_optimized(&self) -> bool {
        matches!(self, Method::PerUnit | Method::TwoWay | Method::OneWay)
    }
}

impl From<Variant> for Method {
    fn from(v: Variant) -> Self {
        match v {
            Variant::PerUnit => Method::PerUnit,
            Variant::TwoWay => Method::TwoWay,
            Variant::OneWay => Method::OneWay,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc-random" | "synthetic-control-random" => Ok(Method::SyntheticControlRandom),
            "dim-random" | "diff-in-means" | "diff-in-means-random" => Ok(Method::DiffInMeansRandom),
            other => other
                .parse::<Variant>()
                .map(Method::from)
                .map_err(|_| Error::usage(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method: Method,
    pub atet: f64,
    /// One entry per post-cutoff period.
    pub per_period_atet: Vec<f64>,
    /// Treated unit index → effect averaged over post periods.
    pub unit_effects: BTreeMap<usize, f64>,
    /// Treated unit index → per-period effects. Global methods repeat the
    /// per-period ATET for every unit.
    pub unit_period_effects: BTreeMap<usize, Vec<f64>>,
    pub seed: u64,
}

impl EffectEstimate {
    fn from_unit_periods(method: Method, rows: BTreeMap<usize, Vec<f64>>, per_period: Vec<f64>, seed: u64) -> Self {
        let unit_effects = rows.iter().map(|(&i, r)| (i, mean(r))).collect();
        EffectEstimate {
            method,
            atet: mean(&per_period),
            per_period_atet: per_period,
            unit_effects,
            unit_period_effects: rows,
            seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_post(panel: &Panel, design: &Design) -> Result<()> {
    if design.n_units() != panel.n_units() {
        return Err(Error::usage(format!(
            "design covers {} units, panel has {}",
            design.n_units(),
            panel.n_units()
        )));
    }
    if panel.n_post() == 0 {
        return Err(Error::usage("panel has no post-cutoff periods"));
    }
    Ok(())
}

/// Per-unit synthetic control: `τ̂_it = Y_it − Σ_j w^i_j Y_jt`.
pub fn estimate_per_unit(panel: &Panel, design: &Design) -> Result<EffectEstimate> {
    check_post(panel, design)?;
    let rows = match design.weights.as_ref().map(|w| &w.weights) {
        Some(Weights::PerUnit { treated, rows }) if treated == &design.treated => rows,
        _ => return Err(Error::usage("per-unit estimate needs per-unit weights for the treated set")),
    };
    let y = panel.values();
    let (t0, s) = (panel.t_pre(), panel.n_periods());
    let controls = design.controls();
    let mut unit_rows = BTreeMap::new();
    for (row, &i) in rows.iter().zip(design.treated()) {
        let effects: Vec<f64> = (t0..s)
            .map(|t| y[(i, t)] - controls.iter().map(|&j| row[j] * y[(j, t)]).sum::<f64>())
            .collect();
        unit_rows.insert(i, effects);
    }
    let per_period = (0..s - t0)
        .map(|t| unit_rows.values().map(|r: &Vec<f64>| r[t]).sum::<f64>() / design.k() as f64)
        .collect();
    Ok(EffectEstimate::from_unit_periods(Method::PerUnit, unit_rows, per_period, design.seed))
}

fn weighted_difference(panel: &Panel, design: &Design, w: &[f64], method: Method) -> EffectEstimate {
    let y = panel.values();
    let (t0, s) = (panel.t_pre(), panel.n_periods());
    let per_period: Vec<f64> = (t0..s)
        .map(|t| {
            (0..panel.n_units())
                .map(|i| if design.is_treated(i) { w[i] * y[(i, t)] } else { -w[i] * y[(i, t)] })
                .sum()
        })
        .collect();
    let rows = design.treated().iter().map(|&i| (i, per_period.clone())).collect();
    EffectEstimate::from_unit_periods(method, rows, per_period, design.seed)
}

/// Difference of weighted treated and control means, per post period.
pub fn estimate_weighted_atet(panel: &Panel, design: &Design) -> Result<EffectEstimate> {
    check_post(panel, design)?;
    let w = match design.weights.as_ref().map(|w| &w.weights) {
        Some(Weights::Global { w }) if w.len() == panel.n_units() => w,
        _ => return Err(Error::usage("weighted ATET needs one global weight per unit")),
    };
    let method = match design.variant {
        Some(Variant::OneWay) => Method::OneWay,
        _ => Method::TwoWay,
    };
    Ok(weighted_difference(panel, design, w, method))
}

pub fn estimate_diff_in_means(panel: &Panel, design: &Design) -> Result<EffectEstimate> {
    check_post(panel, design)?;
    let (k, nk) = (design.k() as f64, (design.n_units() - design.k()) as f64);
    let w: Vec<f64> = design.d.iter().map(|&d| if d == 1 { 1.0 / k } else { 1.0 / nk }).collect();
    Ok(weighted_difference(panel, design, &w, Method::DiffInMeansRandom))
}

/// Estimates with the weights already stored on the design.
pub fn estimate(panel: &Panel, design: &Design, method: Method) -> Result<EffectEstimate> {
    let mut est = match method {
        Method::PerUnit | Method::SyntheticControlRandom => estimate_per_unit(panel, design)?,
        Method::TwoWay | Method::OneWay => estimate_weighted_atet(panel, design)?,
        Method::DiffInMeansRandom => estimate_diff_in_means(panel, design)?,
    };
    est.method = method;
    Ok(est)
}

/// Fits the method's weights for the design's treated set on the panel's
/// pre-cutoff block.
pub fn fit_weights(panel: &Panel, design: &Design, method: Method, lambda: f64, cons: &WeightConstraints) -> Result<Design> {
    let mut fitted = design.clone();
    if let Some(variant) = method.variant() {
        let sol = weights::solve_weights(variant, &panel.pre(), design.treated(), lambda, cons)?;
        fitted.variant = Some(variant);
        fitted.lambda = Some(lambda);
        fitted.constraints = Some(*cons);
        fitted.objective = Some(sol.objective);
        fitted.weights = Some(sol);
    }
    Ok(fitted)
}

pub fn fit_and_estimate(
    panel: &Panel,
    design: &Design,
    method: Method,
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<EffectEstimate> {
    let fitted = fit_weights(panel, design, method, lambda, cons)?;
    estimate(panel, &fitted, method)
}

/// One estimator's MSE: closed-form `bias² + σ²‖c‖²` against the
/// Monte-Carlo mean of squared errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    /// Treated unit, or `None` for the ATET.
    pub unit: Option<usize>,
    pub bias2: f64,
    pub variance: f64,
    pub formula: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub sigma2: f64,
    pub reps: usize,
    pub seed: u64,
    /// Per-unit estimators (per-unit weights only).
    pub units: Vec<MseEntry>,
    pub atet: MseEntry,
}

impl MseReport {
    pub fn max_abs_z(&self) -> f64 {
        self.units
            .iter()
            .chain(std::iter::once(&self.atet))
            .map(|e| e.z.abs())
            .fold(0.0, f64::max)
    }
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

/// Monte-Carlo check of the conditional MSE of the design's estimators.
///
/// `mu` holds the untreated mean outcomes; its last column is the
/// evaluated period. Outcomes are drawn as `μ + ε` with iid
/// `N(0, sigma2)` noise while the design and its weights stay fixed, so
/// the true effect is zero and every squared estimate is a squared error.
pub fn mse_oracle_check(mu: &DMatrix<f64>, sigma2: f64, design: &Design, reps: usize, seed: u64) -> Result<MseReport> {
    let n = mu.nrows();
    if design.n_units() != n || mu.ncols() == 0 {
        return Err(Error::usage("mean matrix does not match the design"));
    }
    if !(sigma2 >= 0.0) || reps == 0 {
        return Err(Error::usage("need sigma2 ≥ 0 and at least one replication"));
    }
    let m = mu.column(mu.ncols() - 1).clone_owned();
    let weights = design
        .weights
        .as_ref()
        .ok_or_else(|| Error::usage("design carries no weights"))?;

    // Coefficient vectors c with τ̂ = c·Y.
    let mut unit_coefs: Vec<(usize, Vec<f64>)> = Vec::new();
    let atet_coef: Vec<f64> = match &weights.weights {
        Weights::PerUnit { treated, rows } => {
            let k = treated.len() as f64;
            let mut avg = vec![0.0; n];
            for (row, &i) in rows.iter().zip(treated) {
                let mut c: Vec<f64> = (0..n).map(|j| if design.is_treated(j) { 0.0 } else { -row[j] }).collect();
                c[i] = 1.0;
                for j in 0..n {
                    avg[j] += c[j] / k;
                }
                unit_coefs.push((i, c));
            }
            avg
        }
        Weights::Global { w } => (0..n).map(|j| if design.is_treated(j) { w[j] } else { -w[j] }).collect(),
    };

    let sd = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![Welford::default(); unit_coefs.len() + 1];
    let mut y = vec![0.0; n];
    for _ in 0..reps {
        for j in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[j] = m[j] + sd * e;
        }
        for (a, (_, c)) in acc.iter_mut().zip(&unit_coefs) {
            let est: f64 = c.iter().zip(&y).map(|(c, y)| c * y).sum();
            a.push(est * est);
        }
        let est: f64 = atet_coef.iter().zip(&y).map(|(c, y)| c * y).sum();
        acc[unit_coefs.len()].push(est * est);
    }

    let entry = |unit: Option<usize>, c: &[f64], a: &Welford| {
        let bias: f64 = c.iter().zip(m.iter()).map(|(c, m)| c * m).sum();
        let bias2 = bias * bias;
        let variance = sigma2 * c.iter().map(|v| v * v).sum::<f64>();
        let formula = bias2 + variance;
        let se = a.std_error();
        let diff = a.mean - formula;
        let z = if se > 0.0 {
            diff / se
        } else if diff.abs() <= 1e-12 * formula.abs().max(1e-300) {
            0.0
        } else {
            f64::INFINITY
        };
        MseEntry {
            unit,
            bias2,
            variance,
            formula,
            empirical: a.mean,
            std_error: se,
            z,
        }
    };
    let units = unit_coefs
        .iter()
        .zip(&acc)
        .map(|((i, c), a)| entry(Some(*i), c, a))
        .collect();
    let atet = entry(None, &atet_coef, &acc[unit_coefs.len()]);
    Ok(MseReport {
        sigma2,
        reps,
        seed,
        units,
        atet,
    })
}
