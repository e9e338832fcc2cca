//! Permutation tests over time periods for the sharp null of no effect.
//!
//! Each draw reorders the periods, keeps the last `S − T_pre` positions as
//! the treated block, re-fits on the permuted pre block and recomputes the
//! statistic. By default only the weights are re-fitted and the treated
//! set stays fixed; [`Refit::Design`] re-runs the whole selection, which
//! keeps the test valid when the treated set was itself chosen from the
//! data.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, Method};
use crate::panel::Panel;
use crate::selector::{self, Design, DesignProblem, SearchMode};
use crate::weights::WeightConstraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Iid,
    MovingBlock,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Iid, Scheme::MovingBlock];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Iid => "iid",
            Scheme::MovingBlock => "moving-block",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Scheme::Iid),
            "moving-block" | "moving_block" | "block" => Ok(Scheme::MovingBlock),
            other => Err(Error::usage(format!("unknown permutation scheme '{other}'"))),
        }
    }
}

/// What is re-estimated on each permuted sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refit {
    /// Treated set fixed, weights re-fitted.
    Weights,
    /// Treated set re-selected (optimized methods only), then weights.
    Design,
}

impl Refit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Refit::Weights => "weights",
            Refit::Design => "design",
        }
    }
}

impl fmt::Display for Refit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Refit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weights" => Ok(Refit::Weights),
            "design" => Ok(Refit::Design),
            other => Err(Error::usage(format!("unknown refit mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub scheme: Scheme,
    pub n_draws: usize,
    pub alpha: f64,
    pub seed: u64,
    pub refit: Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub method: Method,
    pub scheme: Scheme,
    pub refit: Refit,
    pub requested_draws: usize,
    pub n_draws: usize,
    pub alpha: f64,
    pub seed: u64,
    pub observed_stat: f64,
    pub reference: Vec<f64>,
    /// Lower empirical `1 − α` quantile of the reference together with
    /// the observed statistic (the identity ordering), so that rejecting
    /// above it is the same event as `p_value ≤ α`.
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Reference quantiles at 0.5, 0.9, 0.95 and 0.99.
    pub quantiles: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl PermutationTest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `|mean effect| / √(treated periods)`.
pub fn test_statistic(per_period_atet: &[f64], n_treated_periods: usize) -> f64 {
    if per_period_atet.is_empty() || n_treated_periods == 0 {
        return 0.0;
    }
    let m = per_period_atet.iter().sum::<f64>() / per_period_atet.len() as f64;
    m.abs() / (n_treated_periods as f64).sqrt()
}

/// Cyclic shift by `shift`: position `t` takes period `(t + shift) mod s`.
pub fn cyclic_shift(s: usize, shift: usize) -> Vec<usize> {
    (0..s).map(|t| (t + shift) % s).collect()
}

/// Period order for one draw (0-based). Moving-block draws use
/// `draw_index` as the shift; iid draws shuffle with a stream derived
/// from `(seed, draw_index)`.
pub fn permute_periods(s: usize, scheme: Scheme, draw_index: u64, seed: u64) -> Vec<usize> {
    match scheme {
        Scheme::MovingBlock => cyclic_shift(s, (draw_index % s.max(1) as u64) as usize),
        Scheme::Iid => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw_index);
            let mut order: Vec<usize> = (0..s).collect();
            order.shuffle(&mut rng);
            order
        }
    }
}

/// Lower empirical quantile: the `⌈q·n⌉`-th smallest value.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Statistic after refitting on `panel`; `problem` is set when the
/// treated set is re-selected too.
fn statistic(
    panel: &Panel,
    design: &Design,
    method: Method,
    lambda: f64,
    cons: &WeightConstraints,
    problem: Option<&DesignProblem>,
) -> Result<f64> {
    let est = match problem {
        Some(p) => {
            let d = selector::select_design(panel, p)?;
            estimators::estimate(panel, &d, method)?
        }
        None => estimators::fit_and_estimate(panel, design, method, lambda, cons)?,
    };
    Ok(test_statistic(&est.per_period_atet, panel.n_post()))
}

/// Permutation test for the design's treated set, re-fitting only the
/// weights on each permuted sample.
///
/// The penalty and constraints for refitting come from the design; random
/// designs must have `lambda` filled in by the caller unless the method
/// is diff-in-means.
pub fn permutation_test(
    panel: &Panel,
    design: &Design,
    method: Method,
    scheme: Scheme,
    n_draws: usize,
    alpha: f64,
    seed: u64,
) -> Result<PermutationTest> {
    let opts = TestOptions {
        scheme,
        n_draws,
        alpha,
        seed,
        refit: Refit::Weights,
    };
    permutation_test_with(panel, design, method, &opts)
}

pub fn permutation_test_with(panel: &Panel, design: &Design, method: Method, opts: &TestOptions) -> Result<PermutationTest> {
    let TestOptions {
        scheme,
        n_draws,
        alpha,
        seed,
        refit,
    } = *opts;
    let s = panel.n_periods();
    if panel.n_post() == 0 {
        return Err(Error::usage("no treated periods to test"));
    }
    if n_draws == 0 {
        return Err(Error::usage("need at least one permutation draw"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if design.n_units() != panel.n_units() {
        return Err(Error::usage("design and panel sizes differ"));
    }
    let lambda = match (method.variant(), design.lambda) {
        (None, _) => 0.0,
        (Some(_), Some(l)) => l,
        (Some(_), None) => return Err(Error::usage("design does not record the penalty λ needed for refitting")),
    };
    let cons = design.constraints.unwrap_or_default();
    let problem = match (refit, method.variant()) {
        (Refit::Design, Some(variant)) if method.is_optimized() => Some(
            DesignProblem::new(variant, design.k(), lambda)
                .with_constraints(cons)
                .with_mode(if design.exact { SearchMode::ExactEnum } else { SearchMode::LocalSearch })
                .with_seed(design.seed),
        ),
        _ => None,
    };

    let mut warnings = Vec::new();
    let orders: Vec<Vec<usize>> = match scheme {
        Scheme::MovingBlock if n_draws >= s => {
            if n_draws > s {
                warnings.push(format!(
                    "moving-block draws capped at {s} distinct shifts (requested {n_draws})"
                ));
            }
            (0..s).map(|k| cyclic_shift(s, k)).collect()
        }
        Scheme::MovingBlock => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, s, n_draws)
                .into_iter()
                .map(|k| cyclic_shift(s, k))
                .collect()
        }
        Scheme::Iid => (0..n_draws as u64)
            .map(|d| permute_periods(s, Scheme::Iid, d, seed))
            .collect(),
    };

    let observed_stat = statistic(panel, design, method, lambda, &cons, problem.as_ref())?;
    let reference = orders
        .par_iter()
        .map(|order| {
            let permuted = panel.permute_periods(order)?;
            statistic(&permuted, design, method, lambda, &cons, problem.as_ref())
        })
        .collect::<Result<Vec<f64>>>()?;

    let n = reference.len();
    let exceed = reference.iter().filter(|&&r| r >= observed_stat).count();
    let p_value = (1 + exceed) as f64 / (1 + n) as f64;
    let mut sorted = reference.clone();
    sorted.sort_by(f64::total_cmp);
    let mut with_identity = reference.clone();
    with_identity.push(observed_stat);
    with_identity.sort_by(f64::total_cmp);
    let critical_value = empirical_quantile(&with_identity, 1.0 - alpha);
    let quantiles = [0.5, 0.9, 0.95, 0.99]
        .iter()
        .map(|&q| (q, empirical_quantile(&sorted, q)))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PermutationTest {
        method,
        scheme,
        refit,
        requested_draws: n_draws,
        n_draws: n,
        alpha,
        seed,
        observed_stat,
        reject: observed_stat > critical_value,
        reference,
        critical_value,
        p_value,
        quantiles,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn statistic_examples() {
        assert!((test_statistic(&[0.06; 4], 4) - 0.03).abs() < 1e-15);
        assert_eq!(test_statistic(&[0.0, 0.0], 2), 0.0);
        assert_eq!(test_statistic(&[-0.1, 0.3], 2), test_statistic(&[0.1, -0.3], 2));
    }

    #[test]
    fn shift_example() {
        assert_eq!(cyclic_shift(5, 2), vec![2, 3, 4, 0, 1]);
        assert_eq!(permute_periods(5, Scheme::MovingBlock, 7, 0), vec![2, 3, 4, 0, 1]);
        assert_eq!(permute_periods(9, Scheme::Iid, 3, 11), permute_periods(9, Scheme::Iid, 3, 11));
    }

    #[test]
    fn quantile_is_lower_order_statistic() {
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.9), 36.0);
        assert_eq!(empirical_quantile(&v, 0.5), 20.0);
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
    }

    #[test]
    fn rejection_matches_p_value() {
        let panel = Panel::from_matrix(
            DMatrix::from_fn(6, 12, |i, t| ((i * 5 + t * 7) % 11) as f64 * 0.01 + if i < 2 && t >= 9 { 0.2 } else { 0.0 }),
            9,
        )
        .unwrap();
        let mut design = Design::from_treated(6, &[0, 1]).unwrap();
        design.lambda = Some(1e-4);
        for scheme in Scheme::ALL {
            for alpha in [0.05, 0.1, 0.3, 0.5] {
                let t = permutation_test(&panel, &design, Method::TwoWay, scheme, 30, alpha, 4).unwrap();
                assert_eq!(t.reject, t.p_value <= alpha, "{scheme} {alpha}");
            }
        }
    }

    #[test]
    fn design_refit_reselects_treated_set() {
        let panel = Panel::from_matrix(DMatrix::from_fn(5, 10, |i, t| ((i * 3 + t * 5) % 7) as f64 * 0.01), 8).unwrap();
        let problem = DesignProblem::new(crate::objectives::Variant::OneWay, 2, 1e-4);
        let design = selector::select_design(&panel, &problem).unwrap();
        let opts = TestOptions {
            scheme: Scheme::MovingBlock,
            n_draws: 10,
            alpha: 0.1,
            seed: 0,
            refit: Refit::Design,
        };
        let t = permutation_test_with(&panel, &design, Method::OneWay, &opts).unwrap();
        // Shift 0 is the observed sample.
        assert_eq!(t.reference[0], t.observed_stat);
        assert_eq!(t.refit, Refit::Design);
    }

    #[test]
    fn constant_panel_never_rejects() {
        let panel = Panel::from_matrix(DMatrix::from_element(5, 8, 0.05), 6).unwrap();
        let mut design = Design::from_treated(5, &[0, 3]).unwrap();
        design.lambda = Some(0.01);
        let t = permutation_test(&panel, &design, Method::TwoWay, Scheme::MovingBlock, 20, 0.1, 1).unwrap();
        assert_eq!(t.observed_stat, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(!t.reject);
        assert_eq!(t.n_draws, 8);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn requires_post_periods_and_penalty() {
        let panel = Panel::from_matrix(DMatrix::from_element(4, 3, 1.0), 3).unwrap();
        let design = Design::from_treated(4, &[0]).unwrap();
        assert!(permutation_test(&panel, &design, Method::DiffInMeansRandom, Scheme::Iid, 5, 0.1, 0).is_err());
        let panel = panel.with_t_pre(2).unwrap();
        assert!(permutation_test(&panel, &design, Method::PerUnit, Scheme::Iid, 5, 0.1, 0).is_err());
        assert!(permutation_test(&panel, &design, Method::DiffInMeansRandom, Scheme::Iid, 5, 0.1, 0).is_ok());
    }
}
