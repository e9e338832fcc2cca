//! Treated-set selection.
//!
//! Exact mode enumerates all `C(N, K)` subsets in lexicographic order and
//! solves the inner weight problem for each; local search runs restarted
//! best-improvement single-swap descents. Both break ties on the
//! lexicographically smallest sorted treated tuple, so serial and parallel
//! evaluation return the same design.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{self, ClosedFormInputs, Variant};
use crate::panel::Panel;
use crate::weights::{self, WeightConstraints, WeightSolution, Weights, KKT_TOL};

/// Objectives closer than this (relative to `max(1, |J|)`) count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    ExactEnum,
    LocalSearch,
    Auto,
}

impl FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-enum" => Ok(SearchMode::ExactEnum),
            "local" | "local-search" => Ok(SearchMode::LocalSearch),
            "auto" => Ok(SearchMode::Auto),
            other => Err(Error::usage(format!("unknown search mode '{other}'"))),
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::ExactEnum => "exact",
            SearchMode::LocalSearch => "local",
            SearchMode::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub variant: Variant,
    pub k: usize,
    pub lambda: f64,
    pub constraints: WeightConstraints,
    pub mode: SearchMode,
    pub enum_limit: u128,
    pub restarts: usize,
    pub seed: u64,
    /// Score subsets with the single-period closed forms when they apply
    /// (one period, free signs, normalized weights).
    pub closed_form_scoring: bool,
}

impl DesignProblem {
    pub fn new(variant: Variant, k: usize, lambda: f64) -> Self {
        DesignProblem {
            variant,
            k,
            lambda,
            constraints: WeightConstraints::SIMPLEX,
            mode: SearchMode::Auto,
            enum_limit: 200_000,
            restarts: 20,
            seed: 0,
            closed_form_scoring: true,
        }
    }

    pub fn with_constraints(mut self, cons: WeightConstraints) -> Self {
        self.constraints = cons;
        self
    }

    pub fn with_mode(mut self, mode: SearchMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k < 1 || self.k >= n {
            return Err(Error::usage(format!(
                "K = {} must satisfy 1 ≤ K ≤ N − 1 = {}",
                self.k,
                n.saturating_sub(1)
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::usage(format!("λ must be positive, got {}", self.lambda)));
        }
        if self.restarts == 0 && self.mode == SearchMode::LocalSearch {
            return Err(Error::usage("local search needs at least one restart"));
        }
        Ok(())
    }
}

/// A treated set plus (optionally) fitted weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    /// Treatment indicator, one entry per unit.
    pub d: Vec<u8>,
    pub treated: Vec<usize>,
    #[serde(default)]
    pub unit_ids: Vec<String>,
    pub variant: Option<Variant>,
    pub lambda: Option<f64>,
    pub constraints: Option<WeightConstraints>,
    pub weights: Option<WeightSolution>,
    pub objective: Option<f64>,
    /// True iff produced by full enumeration.
    pub exact: bool,
    pub seed: u64,
}

impl Design {
    /// Bare design with no weights.
    pub fn from_treated(n: usize, treated: &[usize]) -> Result<Self> {
        let sp = weights::split(n, treated)?;
        let mut d = vec![0u8; n];
        for &i in &sp.treated {
            d[i] = 1;
        }
        Ok(Design {
            d,
            treated: sp.treated,
            unit_ids: Vec::new(),
            variant: None,
            lambda: None,
            constraints: None,
            weights: None,
            objective: None,
            exact: false,
            seed: 0,
        })
    }

    pub fn n_units(&self) -> usize {
        self.d.len()
    }

    pub fn k(&self) -> usize {
        self.treated.len()
    }

    pub fn treated(&self) -> &[usize] {
        &self.treated
    }

    pub fn controls(&self) -> Vec<usize> {
        (0..self.d.len()).filter(|&i| self.d[i] == 0).collect()
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.d[i] == 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a design file and checks that `d` and `treated` agree.
    pub fn from_json(text: &str) -> Result<Self> {
        let design: Design = serde_json::from_str(text)?;
        let mut from_d: Vec<usize> = Vec::new();
        for (i, &v) in design.d.iter().enumerate() {
            match v {
                0 => {}
                1 => from_d.push(i),
                other => return Err(Error::data(format!("indicator entry {other} is not 0/1"))),
            }
        }
        if from_d != design.treated {
            return Err(Error::data("design indicator and treated list disagree"));
        }
        Ok(design)
    }
}

/// Saturates at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) / (i + 1) is exact; dividing out the gcd first keeps the
        // product in range
        let den = (i + 1) as u128;
        let g = gcd(c, den);
        match (c / g).checked_mul((n - i) as u128 / (den / g)) {
            Some(v) => c = v,
            None => return u128::MAX,
        }
    }
    c
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k).min(1 << 24) as usize);
    if k == 0 || k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        while i > 0 && c[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

fn better(a: f64, a_set: &[usize], b: f64, b_set: &[usize]) -> bool {
    let tol = TIE_TOL * b.abs().max(1.0);
    a < b - tol || ((a - b).abs() <= tol && a_set < b_set)
}

/// Scores treated sets for one problem on a fixed pre-period block.
struct Scorer<'a> {
    pre: &'a DMatrix<f64>,
    problem: &'a DesignProblem,
    closed_form: bool,
}

impl<'a> Scorer<'a> {
    fn new(pre: &'a DMatrix<f64>, problem: &'a DesignProblem) -> Self {
        let c = &problem.constraints;
        let closed_form = problem.closed_form_scoring
            && pre.ncols() == 1
            && !c.nonnegative
            && c.normalize;
        Scorer {
            pre,
            problem,
            closed_form,
        }
    }

    fn score(&self, treated: &[usize]) -> Result<f64> {
        if self.closed_form {
            let a: Vec<f64> = self.pre.column(0).iter().copied().collect();
            let cf = ClosedFormInputs::new(a, self.problem.lambda, treated)?;
            let variant = if self.problem.constraints.treated_equal {
                Variant::OneWay
            } else {
                self.problem.variant
            };
            return Ok(objectives::closed_form(variant, &cf));
        }
        objectives::empirical_objective(
            self.pre,
            treated,
            self.problem.lambda,
            self.problem.variant,
            &self.problem.constraints,
        )
    }
}

pub fn select_design(panel: &Panel, problem: &DesignProblem) -> Result<Design> {
    let pre = panel.pre();
    let mut design = select_on_pre(&pre, problem)?;
    design.unit_ids = panel.unit_ids().to_vec();
    Ok(design)
}

/// Selection on a bare `N × T` pre-period matrix.
pub fn select_on_pre(pre: &DMatrix<f64>, problem: &DesignProblem) -> Result<Design> {
    let n = pre.nrows();
    problem.validate(n)?;
    let count = binomial(n, problem.k);
    let exact = match problem.mode {
        SearchMode::ExactEnum => {
            if count > problem.enum_limit {
                return Err(Error::EnumerationLimit {
                    n,
                    k: problem.k,
                    count,
                    limit: problem.enum_limit,
                });
            }
            true
        }
        SearchMode::LocalSearch => false,
        SearchMode::Auto => count <= problem.enum_limit,
    };
    let scorer = Scorer::new(pre, problem);
    let treated = if exact {
        exhaustive(&scorer, n, problem.k)?
    } else {
        local_search(&scorer, n, problem)?
    };
    finish(pre, problem, &treated, exact)
}

fn finish(pre: &DMatrix<f64>, problem: &DesignProblem, treated: &[usize], exact: bool) -> Result<Design> {
    let sol = weights::solve_weights(problem.variant, pre, treated, problem.lambda, &problem.constraints)?;
    let mut design = Design::from_treated(pre.nrows(), treated)?;
    design.variant = Some(problem.variant);
    design.lambda = Some(problem.lambda);
    design.constraints = Some(problem.constraints);
    design.objective = Some(sol.objective);
    design.weights = Some(sol);
    design.exact = exact;
    design.seed = problem.seed;
    Ok(design)
}

fn exhaustive(scorer: &Scorer<'_>, n: usize, k: usize) -> Result<Vec<usize>> {
    let subsets = combinations(n, k);
    let scores: Vec<Result<f64>> = subsets.par_iter().map(|s| scorer.score(s)).collect();
    let mut best: Option<(f64, usize)> = None;
    for (idx, score) in scores.into_iter().enumerate() {
        let j = score?;
        let replace = match best {
            None => true,
            Some((b, bi)) => better(j, &subsets[idx], b, &subsets[bi]),
        };
        if replace {
            best = Some((j, idx));
        }
    }
    let (_, idx) = best.ok_or_else(|| Error::usage("no subsets to enumerate"))?;
    Ok(subsets[idx].clone())
}

fn local_search(scorer: &Scorer<'_>, n: usize, problem: &DesignProblem) -> Result<Vec<usize>> {
    let runs: Vec<Result<(f64, Vec<usize>)>> = (0..problem.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
            rng.set_stream(r as u64);
            let mut start = index::sample(&mut rng, n, problem.k).into_vec();
            start.sort_unstable();
            descend(scorer, n, start)
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for run in runs {
        let (j, set) = run?;
        let replace = match &best {
            None => true,
            Some((b, bs)) => better(j, &set, *b, bs),
        };
        if replace {
            best = Some((j, set));
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or_default())
}

/// Best-improvement descent over all `K·(N−K)` single swaps.
fn descend(scorer: &Scorer<'_>, n: usize, start: Vec<usize>) -> Result<(f64, Vec<usize>)> {
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut eval = |set: &Vec<usize>| -> Result<f64> {
        if let Some(&v) = cache.get(set) {
            return Ok(v);
        }
        let v = scorer.score(set)?;
        cache.insert(set.clone(), v);
        Ok(v)
    };
    let mut current = start;
    let mut value = eval(&current)?;
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for pos in 0..current.len() {
            for j in (0..n).filter(|j| current.binary_search(j).is_err()) {
                let mut cand = current.clone();
                cand[pos] = j;
                cand.sort_unstable();
                let v = eval(&cand)?;
                let replace = match &best {
                    None => true,
                    Some((b, bs)) => better(v, &cand, *b, bs),
                };
                if replace {
                    best = Some((v, cand));
                }
            }
        }
        match best {
            Some((v, cand)) if v < value - 1e-12 => {
                value = v;
                current = cand;
            }
            _ => return Ok((value, current)),
        }
    }
}

/// Uniformly random `k`-subset of `n` units, without weights.
pub fn random_design(n: usize, k: usize, seed: u64) -> Result<Design> {
    if k < 1 || k >= n {
        return Err(Error::usage(format!("random design needs 1 ≤ k < n, got k={k}, n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut treated = index::sample(&mut rng, n, k).into_vec();
    treated.sort_unstable();
    let mut d = Design::from_treated(n, &treated)?;
    d.seed = seed;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-checks feasibility, the stored objective and the KKT residual of the
/// stored weights.
pub fn verify_design(panel: &Panel, problem: &DesignProblem, design: &Design) -> VerifyReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        })
    };
    let n = panel.n_units();
    let sum: usize = design.d.iter().map(|&v| v as usize).sum();
    let consistent = design.d.len() == n
        && design.d.iter().all(|&v| v <= 1)
        && design.treated
            == design
                .d
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| i)
                .collect::<Vec<_>>();
    push(
        "feasibility",
        consistent && sum == problem.k,
        format!("N = {}, ΣD = {}, K = {}", design.d.len(), sum, problem.k),
    );

    let pre = panel.pre();
    let Some(sol) = design.weights.as_ref() else {
        push("weights", false, "design carries no weights".into());
        return VerifyReport { checks };
    };
    if !consistent || sum == 0 || sum >= n {
        return VerifyReport { checks };
    }

    let cons = &problem.constraints;
    let mut constraint_detail = String::new();
    let mut ok = true;
    let check_group = |vals: &[f64], ok: &mut bool, detail: &mut String| {
        if cons.nonnegative && vals.iter().any(|&v| v < 0.0) {
            *ok = false;
            detail.push_str("negative weight; ");
        }
        if cons.normalize && (vals.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            *ok = false;
            detail.push_str("group sum ≠ 1; ");
        }
    };
    match (&sol.weights, problem.variant) {
        (Weights::Global { w }, Variant::TwoWay | Variant::OneWay) if w.len() == n => {
            let t: Vec<f64> = design.treated.iter().map(|&i| w[i]).collect();
            let c: Vec<f64> = design.controls().iter().map(|&i| w[i]).collect();
            check_group(&t, &mut ok, &mut constraint_detail);
            check_group(&c, &mut ok, &mut constraint_detail);
        }
        (Weights::PerUnit { rows, .. }, Variant::PerUnit) if rows.len() == design.k() => {
            for row in rows {
                if row.len() != n || design.treated.iter().any(|&i| row[i] != 0.0) {
                    ok = false;
                    constraint_detail.push_str("weight on a treated column; ");
                    continue;
                }
                let c: Vec<f64> = design.controls().iter().map(|&i| row[i]).collect();
                check_group(&c, &mut ok, &mut constraint_detail);
            }
        }
        _ => {
            ok = false;
            constraint_detail.push_str("weight layout does not match the variant");
        }
    }
    push("weight-constraints", ok, constraint_detail);
    if !ok {
        return VerifyReport { checks };
    }

    match weights::evaluate_weights(&sol.weights, &pre, &design.treated, problem.lambda) {
        Ok(value) => {
            let stored = design.objective.unwrap_or(f64::NAN);
            let fresh = objectives::empirical_objective(
                &pre,
                &design.treated,
                problem.lambda,
                problem.variant,
                cons,
            );
            let (passed, detail) = match fresh {
                Ok(f) => (
                    (value - stored).abs() <= 1e-10 && (f - stored).abs() <= 1e-10,
                    format!("stored {stored:.12e}, evaluated {value:.12e}, re-solved {f:.12e}"),
                ),
                Err(e) => (false, e.to_string()),
            };
            push("objective", passed, detail);
        }
        Err(e) => push("objective", false, e.to_string()),
    }

    match weights::kkt_residual(&sol.weights, problem.variant, &pre, &design.treated, problem.lambda, cons) {
        Ok(r) => push("kkt", r <= KKT_TOL, format!("residual {r:.3e}")),
        Err(e) => push("kkt", false, e.to_string()),
    }
    VerifyReport { checks }
}
