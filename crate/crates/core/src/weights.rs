//! Inner weight problems for a fixed treated set.
//!
//! With outcomes `Y` (`N × T`, pre-treatment only), treated set `I` and
//! penalty `λ`:
//!
//! * two-way: `min (1/T) Σ_t (Σ_{i∈I} w_i Y_it − Σ_{j∉I} w_j Y_jt)² + λ Σ_i w_i²`
//!   with `Σ_I w = Σ_Ī w = 1`;
//! * one-way: the same with treated weights fixed at `1/K`;
//! * per-unit: for every treated `i`, `min (1/T) Σ_t (Y_it − Σ_{j∉I} w_j Y_jt)² + λ Σ_j w_j²`
//!   with `Σ_j w_j = 1`, reported objective averaged over the `K` rows.
//!
//! Nonnegativity is optional throughout. The closed-form solutions for a
//! single period without sign constraints are provided as oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{ClosedFormInputs, Variant};
use crate::qp::SimplexQp;

/// Tolerance the solver must certify on the KKT residual.
pub const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightConstraints {
    pub nonnegative: bool,
    /// Each weight group sums to one.
    pub normalize: bool,
    /// Treated weights all equal `1/K` (one-way).
    pub treated_equal: bool,
}

impl WeightConstraints {
    /// Nonnegative and normalized: the setting used for designs.
    pub const SIMPLEX: WeightConstraints = WeightConstraints {
        nonnegative: true,
        normalize: true,
        treated_equal: false,
    };

    /// Normalized, signs free: the closed-form setting.
    pub const SIGNED: WeightConstraints = WeightConstraints {
        nonnegative: false,
        normalize: true,
        treated_equal: false,
    };
}

impl Default for WeightConstraints {
    fn default() -> Self {
        WeightConstraints::SIMPLEX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weights {
    /// One weight per unit, treated and control.
    Global { w: Vec<f64> },
    /// One row per treated unit (ascending), columns over all `N` units;
    /// treated columns are zero.
    PerUnit { treated: Vec<usize>, rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Weights,
    /// Attained objective of the inner problem.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl WeightSolution {
    pub fn global(&self) -> Option<&[f64]> {
        match &self.weights {
            Weights::Global { w } => Some(w),
            Weights::PerUnit { .. } => None,
        }
    }

    pub fn per_unit_rows(&self) -> Option<&[Vec<f64>]> {
        match &self.weights {
            Weights::PerUnit { rows, .. } => Some(rows),
            Weights::Global { .. } => None,
        }
    }
}

/// Validated split of the units into treated and control.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
}

pub(crate) fn split(n: usize, treated: &[usize]) -> Result<Split> {
    let mut t = treated.to_vec();
    t.sort_unstable();
    t.dedup();
    if t.len() != treated.len() {
        return Err(Error::usage("duplicate treated index"));
    }
    if let Some(&bad) = t.iter().find(|&&i| i >= n) {
        return Err(Error::usage(format!("treated index {bad} out of range for {n} units")));
    }
    if t.is_empty() {
        return Err(Error::usage("treated group is empty"));
    }
    if t.len() >= n {
        return Err(Error::usage("control group is empty"));
    }
    let controls = (0..n).filter(|i| t.binary_search(i).is_err()).collect();
    Ok(Split { treated: t, controls })
}

fn check_lambda(lambda: f64, cons: &WeightConstraints) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::usage(format!("penalty must be finite and ≥ 0, got {lambda}")));
    }
    if lambda == 0.0 && cons.nonnegative {
        return Err(Error::usage(
            "zero penalty is only allowed without sign constraints",
        ));
    }
    Ok(())
}

/// Ridge least squares `(1/T)‖b − C v‖² + λ‖v‖²` over the given columns,
/// as a QP plus its constant term.
fn ridge_qp(
    pre: &DMatrix<f64>,
    columns: &[(usize, f64)],
    target: &DVector<f64>,
    lambda: f64,
    groups: Vec<Vec<usize>>,
    nonnegative: bool,
) -> (SimplexQp, f64) {
    let t = pre.ncols() as f64;
    let m = columns.len();
    // Design matrix, T × m: column k is sign_k · Y_{unit_k, ·}.
    let design = DMatrix::from_fn(pre.ncols(), m, |s, k| columns[k].1 * pre[(columns[k].0, s)]);
    let mut hessian = design.transpose() * &design * (2.0 / t);
    for k in 0..m {
        hessian[(k, k)] += 2.0 * lambda;
    }
    let linear = design.transpose() * target * (-2.0 / t);
    let constant = target.norm_squared() / t;
    (
        SimplexQp {
            hessian,
            linear,
            groups,
            nonnegative,
        },
        constant,
    )
}

pub fn solve_two_way_weights(
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<WeightSolution> {
    if cons.treated_equal {
        return solve_one_way_weights(pre, treated, lambda, cons);
    }
    check_lambda(lambda, cons)?;
    let sp = split(pre.nrows(), treated)?;
    let n = pre.nrows();
    let columns: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, if sp.treated.binary_search(&i).is_ok() { 1.0 } else { -1.0 }))
        .collect();
    let groups = if cons.normalize {
        vec![sp.treated.clone(), sp.controls.clone()]
    } else {
        vec![]
    };
    let (qp, constant) = ridge_qp(pre, &columns, &DVector::zeros(pre.ncols()), lambda, groups, cons.nonnegative);
    let sol = qp.solve()?;
    let kkt = qp.kkt_residual(&sol.x);
    certify(kkt)?;
    Ok(WeightSolution {
        objective: qp.objective(&sol.x) + constant,
        weights: Weights::Global { w: sol.x.iter().copied().collect() },
        kkt_residual: kkt,
        iterations: sol.iterations,
    })
}

pub fn solve_one_way_weights(
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<WeightSolution> {
    check_lambda(lambda, cons)?;
    let sp = split(pre.nrows(), treated)?;
    let (qp, constant) = one_way_qp(pre, &sp, lambda, cons);
    let sol = qp.solve()?;
    let kkt = qp.kkt_residual(&sol.x);
    certify(kkt)?;
    let k = sp.treated.len() as f64;
    let mut w = vec![0.0; pre.nrows()];
    for &i in &sp.treated {
        w[i] = 1.0 / k;
    }
    for (c, &j) in sp.controls.iter().enumerate() {
        w[j] = sol.x[c];
    }
    Ok(WeightSolution {
        objective: qp.objective(&sol.x) + constant,
        weights: Weights::Global { w },
        kkt_residual: kkt,
        iterations: sol.iterations,
    })
}

fn one_way_qp(pre: &DMatrix<f64>, sp: &Split, lambda: f64, cons: &WeightConstraints) -> (SimplexQp, f64) {
    let k = sp.treated.len() as f64;
    let target = DVector::from_fn(pre.ncols(), |t, _| {
        sp.treated.iter().map(|&i| pre[(i, t)]).sum::<f64>() / k
    });
    let columns: Vec<(usize, f64)> = sp.controls.iter().map(|&j| (j, 1.0)).collect();
    let groups = if cons.normalize {
        vec![(0..sp.controls.len()).collect()]
    } else {
        vec![]
    };
    let (qp, constant) = ridge_qp(pre, &columns, &target, lambda, groups, cons.nonnegative);
    // Fixed treated weights contribute λ·K·(1/K)².
    (qp, constant + lambda / k)
}

fn per_unit_qp(pre: &DMatrix<f64>, sp: &Split, unit: usize, lambda: f64, cons: &WeightConstraints) -> (SimplexQp, f64) {
    let target = DVector::from_fn(pre.ncols(), |t, _| pre[(unit, t)]);
    let columns: Vec<(usize, f64)> = sp.controls.iter().map(|&j| (j, 1.0)).collect();
    let groups = if cons.normalize {
        vec![(0..sp.controls.len()).collect()]
    } else {
        vec![]
    };
    ridge_qp(pre, &columns, &target, lambda, groups, cons.nonnegative)
}

pub fn solve_per_unit_weights(
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<WeightSolution> {
    check_lambda(lambda, cons)?;
    let sp = split(pre.nrows(), treated)?;
    let n = pre.nrows();
    let mut rows = Vec::with_capacity(sp.treated.len());
    let mut total = 0.0;
    let mut kkt = 0.0_f64;
    let mut iterations = 0;
    for &i in &sp.treated {
        let (qp, constant) = per_unit_qp(pre, &sp, i, lambda, cons);
        let sol = qp.solve()?;
        let r = qp.kkt_residual(&sol.x);
        certify(r)?;
        kkt = kkt.max(r);
        iterations += sol.iterations;
        total += qp.objective(&sol.x) + constant;
        let mut row = vec![0.0; n];
        for (c, &j) in sp.controls.iter().enumerate() {
            row[j] = sol.x[c];
        }
        rows.push(row);
    }
    Ok(WeightSolution {
        objective: total / sp.treated.len() as f64,
        weights: Weights::PerUnit { treated: sp.treated, rows },
        kkt_residual: kkt,
        iterations,
    })
}

pub fn solve_weights(
    variant: Variant,
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<WeightSolution> {
    match variant {
        Variant::PerUnit => solve_per_unit_weights(pre, treated, lambda, cons),
        Variant::TwoWay => solve_two_way_weights(pre, treated, lambda, cons),
        Variant::OneWay => solve_one_way_weights(pre, treated, lambda, cons),
    }
}

fn certify(kkt: f64) -> Result<()> {
    if kkt > KKT_TOL {
        Err(Error::solver(format!("KKT residual {kkt:.3e} exceeds {KKT_TOL:e}")))
    } else {
        Ok(())
    }
}

/// KKT residual of a weight solution for the given problem data.
///
/// Also folds in the structural constraints the QP does not see: fixed
/// treated weights `1/K` (one-way) and zero treated columns (per-unit).
pub fn kkt_residual(
    weights: &Weights,
    variant: Variant,
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    cons: &WeightConstraints,
) -> Result<f64> {
    let sp = split(pre.nrows(), treated)?;
    let n = pre.nrows();
    match (variant, weights) {
        (Variant::TwoWay, Weights::Global { w }) if !cons.treated_equal => {
            if w.len() != n {
                return Ok(f64::INFINITY);
            }
            let columns: Vec<(usize, f64)> = (0..n)
                .map(|i| (i, if sp.treated.binary_search(&i).is_ok() { 1.0 } else { -1.0 }))
                .collect();
            let groups = if cons.normalize {
                vec![sp.treated.clone(), sp.controls.clone()]
            } else {
                vec![]
            };
            let (qp, _) = ridge_qp(pre, &columns, &DVector::zeros(pre.ncols()), lambda, groups, cons.nonnegative);
            Ok(qp.kkt_residual(&DVector::from_column_slice(w)))
        }
        (Variant::TwoWay | Variant::OneWay, Weights::Global { w }) => {
            if w.len() != n {
                return Ok(f64::INFINITY);
            }
            let k = sp.treated.len() as f64;
            let fixed = sp
                .treated
                .iter()
                .map(|&i| (w[i] - 1.0 / k).abs())
                .fold(0.0, f64::max);
            let (qp, _) = one_way_qp(pre, &sp, lambda, cons);
            let x = DVector::from_iterator(sp.controls.len(), sp.controls.iter().map(|&j| w[j]));
            Ok(qp.kkt_residual(&x).max(fixed))
        }
        (Variant::PerUnit, Weights::PerUnit { treated: rows_for, rows }) => {
            if rows_for != &sp.treated || rows.iter().any(|r| r.len() != n) {
                return Ok(f64::INFINITY);
            }
            let mut worst = 0.0_f64;
            for (row, &i) in rows.iter().zip(&sp.treated) {
                let (qp, _) = per_unit_qp(pre, &sp, i, lambda, cons);
                let x = DVector::from_iterator(sp.controls.len(), sp.controls.iter().map(|&j| row[j]));
                worst = worst.max(qp.kkt_residual(&x));
                for &t in &sp.treated {
                    worst = worst.max(row[t].abs());
                }
            }
            Ok(worst)
        }
        _ => Err(Error::usage("weight layout does not match the variant")),
    }
}

/// Objective value of given weights, without re-optimizing.
pub fn evaluate_weights(
    weights: &Weights,
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
) -> Result<f64> {
    let sp = split(pre.nrows(), treated)?;
    let t = pre.ncols() as f64;
    match weights {
        Weights::Global { w } => {
            let mut fit = 0.0;
            for s in 0..pre.ncols() {
                let mut r = 0.0;
                for i in 0..pre.nrows() {
                    let sign = if sp.treated.binary_search(&i).is_ok() { 1.0 } else { -1.0 };
                    r += sign * w[i] * pre[(i, s)];
                }
                fit += r * r;
            }
            Ok(fit / t + lambda * w.iter().map(|v| v * v).sum::<f64>())
        }
        Weights::PerUnit { rows, .. } => {
            let mut total = 0.0;
            for (row, &i) in rows.iter().zip(&sp.treated) {
                let mut fit = 0.0;
                for s in 0..pre.ncols() {
                    let synth: f64 = sp.controls.iter().map(|&j| row[j] * pre[(j, s)]).sum();
                    let r = pre[(i, s)] - synth;
                    fit += r * r;
                }
                total += fit / t + lambda * row.iter().map(|v| v * v).sum::<f64>();
            }
            Ok(total / sp.treated.len() as f64)
        }
    }
}

/// Closed-form two-way weights for a single period without sign
/// constraints.
pub fn closed_form_two_way_weights(a: &[f64], treated: &[usize], sigma2: f64) -> Result<Vec<f64>> {
    let cf = ClosedFormInputs::new(a.to_vec(), sigma2, treated)?;
    let gap = cf.mean_treated() - cf.mean_control();
    let denom = sigma2 + cf.v2_treated() + cf.v2_control();
    let (k, nk) = (cf.k() as f64, (cf.n() - cf.k()) as f64);
    Ok((0..a.len())
        .map(|l| {
            if cf.is_treated(l) {
                1.0 / k + gap * (cf.mean_treated() - a[l]) / denom
            } else {
                1.0 / nk - gap * (cf.mean_control() - a[l]) / denom
            }
        })
        .collect())
}

/// Closed-form one-way weights: `1/K` on treated units, adjusted control
/// weights.
pub fn closed_form_one_way_weights(a: &[f64], treated: &[usize], sigma2: f64) -> Result<Vec<f64>> {
    let cf = ClosedFormInputs::new(a.to_vec(), sigma2, treated)?;
    let gap = cf.mean_treated() - cf.mean_control();
    let denom = sigma2 + cf.v2_control();
    let (k, nk) = (cf.k() as f64, (cf.n() - cf.k()) as f64);
    Ok((0..a.len())
        .map(|l| {
            if cf.is_treated(l) {
                1.0 / k
            } else {
                1.0 / nk - gap * (cf.mean_control() - a[l]) / denom
            }
        })
        .collect())
}

/// Closed-form per-unit weights, one row per treated unit (ascending).
pub fn closed_form_per_unit_weights(a: &[f64], treated: &[usize], sigma2: f64) -> Result<Vec<Vec<f64>>> {
    let cf = ClosedFormInputs::new(a.to_vec(), sigma2, treated)?;
    let denom = sigma2 + cf.v2_control();
    let nk = (cf.n() - cf.k()) as f64;
    Ok(cf
        .treated()
        .iter()
        .map(|&i| {
            (0..a.len())
                .map(|j| {
                    if cf.is_treated(j) {
                        0.0
                    } else {
                        1.0 / nk - (a[i] - cf.mean_control()) * (cf.mean_control() - a[j]) / denom
                    }
                })
                .collect()
        })
        .collect())
}
