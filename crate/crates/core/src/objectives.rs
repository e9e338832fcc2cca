//! Design objectives as functions of the treated set.
//!
//! `empirical_objective` optimizes the inner weights on multi-period data.
//! The `closed_form_*` functions give the optimized objective for a single
//! period with sign-unconstrained, normalized weights, where
//! `V²` denotes a group's sum of squared deviations from its mean.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{self, WeightConstraints};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PerUnit,
    TwoWay,
    OneWay,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::PerUnit, Variant::TwoWay, Variant::OneWay];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::PerUnit => "per-unit",
            Variant::TwoWay => "two-way",
            Variant::OneWay => "one-way",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-unit" | "per_unit" | "perunit" => Ok(Variant::PerUnit),
            "two-way" | "two_way" | "twoway" => Ok(Variant::TwoWay),
            "one-way" | "one_way" | "oneway" => Ok(Variant::OneWay),
            other => Err(Error::usage(format!("unknown variant '{other}'"))),
        }
    }
}

/// Single-period outcomes, noise variance and treated set, with the group
/// means and `V²` precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormInputs {
    a: Vec<f64>,
    sigma2: f64,
    treated: Vec<usize>,
    mask: Vec<bool>,
    mean_treated: f64,
    mean_control: f64,
    v2_treated: f64,
    v2_control: f64,
}

impl ClosedFormInputs {
    pub fn new(a: Vec<f64>, sigma2: f64, treated: &[usize]) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::usage(format!("sigma2 must be positive, got {sigma2}")));
        }
        let n = a.len();
        let sp = weights::split(n, treated)?;
        let mut mask = vec![false; n];
        for &i in &sp.treated {
            mask[i] = true;
        }
        let stats = |idx: &[usize]| {
            let m = idx.iter().map(|&i| a[i]).sum::<f64>() / idx.len() as f64;
            let v2 = idx.iter().map(|&i| (a[i] - m).powi(2)).sum::<f64>();
            (m, v2)
        };
        let (mean_treated, v2_treated) = stats(&sp.treated);
        let (mean_control, v2_control) = stats(&sp.controls);
        Ok(ClosedFormInputs {
            a,
            sigma2,
            treated: sp.treated,
            mask,
            mean_treated,
            mean_control,
            v2_treated,
            v2_control,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
    pub fn k(&self) -> usize {
        self.treated.len()
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn treated(&self) -> &[usize] {
        &self.treated
    }
    pub fn is_treated(&self, i: usize) -> bool {
        self.mask[i]
    }
    pub fn mean_treated(&self) -> f64 {
        self.mean_treated
    }
    pub fn mean_control(&self) -> f64 {
        self.mean_control
    }
    pub fn v2_treated(&self) -> f64 {
        self.v2_treated
    }
    pub fn v2_control(&self) -> f64 {
        self.v2_control
    }

    fn gap2(&self) -> f64 {
        (self.mean_treated - self.mean_control).powi(2)
    }
}

pub fn closed_form_per_unit(cf: &ClosedFormInputs) -> f64 {
    let (k, nk) = (cf.k() as f64, (cf.n() - cf.k()) as f64);
    cf.sigma2 * (1.0 / nk + (cf.gap2() + cf.v2_treated / k) / (cf.sigma2 + cf.v2_control))
}

pub fn closed_form_two_way(cf: &ClosedFormInputs) -> f64 {
    let (k, nk) = (cf.k() as f64, (cf.n() - cf.k()) as f64);
    cf.sigma2 * (1.0 / k + 1.0 / nk + cf.gap2() / (cf.sigma2 + cf.v2_treated + cf.v2_control))
}

pub fn closed_form_one_way(cf: &ClosedFormInputs) -> f64 {
    let (k, nk) = (cf.k() as f64, (cf.n() - cf.k()) as f64);
    cf.sigma2 * (1.0 / k + 1.0 / nk + cf.gap2() / (cf.sigma2 + cf.v2_control))
}

pub fn closed_form(variant: Variant, cf: &ClosedFormInputs) -> f64 {
    match variant {
        Variant::PerUnit => closed_form_per_unit(cf),
        Variant::TwoWay => closed_form_two_way(cf),
        Variant::OneWay => closed_form_one_way(cf),
    }
}

/// Optimal inner-weight objective for the treated set on `pre` (`N × T`).
///
/// `lambda` plays the role of the noise variance; zero is accepted only
/// with sign-unconstrained weights.
pub fn empirical_objective(
    pre: &DMatrix<f64>,
    treated: &[usize],
    lambda: f64,
    variant: Variant,
    cons: &WeightConstraints,
) -> Result<f64> {
    Ok(weights::solve_weights(variant, pre, treated, lambda, cons)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cf(a: &[f64], sigma2: f64, treated: &[usize]) -> ClosedFormInputs {
        ClosedFormInputs::new(a.to_vec(), sigma2, treated).unwrap()
    }

    #[test]
    fn constant_outcomes_reduce_to_group_terms() {
        let c = cf(&[3.0; 6], 0.7, &[0, 4]);
        assert!((closed_form_per_unit(&c) - 0.7 / 4.0).abs() < 1e-15);
        assert!((closed_form_two_way(&c) - 0.7 * (0.5 + 0.25)).abs() < 1e-15);
        assert!((closed_form_one_way(&c) - 0.7 * (0.5 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn two_units() {
        let c = cf(&[0.0, 1.0], 1.0, &[0]);
        assert_eq!(closed_form_per_unit(&c), 2.0);
        assert_eq!(closed_form_two_way(&c), 3.0);
    }

    #[test]
    fn four_units_hand_values() {
        let a = [0.0, 1.0, 2.0, 3.0];
        assert!((closed_form_per_unit(&cf(&a, 1.0, &[1, 2])) - 6.0 / 11.0).abs() < 1e-15);
        assert_eq!(closed_form_two_way(&cf(&a, 1.0, &[0, 3])), 1.0);
        assert_eq!(closed_form_two_way(&cf(&a, 1.0, &[1, 2])), 1.0);
        assert_eq!(closed_form_two_way(&cf(&a, 1.0, &[0, 1])), 3.0);
        assert!((closed_form_one_way(&cf(&a, 1.0, &[0, 2])) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(ClosedFormInputs::new(vec![1.0, 2.0], 0.0, &[0]).is_err());
        assert!(ClosedFormInputs::new(vec![1.0, 2.0], 1.0, &[0, 1]).is_err());
        assert!(ClosedFormInputs::new(vec![1.0, 2.0], 1.0, &[]).is_err());
    }

    #[test]
    fn perfect_fit_is_zero_without_penalty() {
        let row = [0.1, 0.4, -0.2];
        let pre = DMatrix::from_fn(4, 3, |_, t| row[t]);
        for v in Variant::ALL {
            let j = empirical_objective(&pre, &[0, 1], 0.0, v, &WeightConstraints::SIGNED).unwrap();
            assert!(j.abs() < 1e-12, "{v}: {j}");
        }
    }

    #[test]
    fn objective_non_decreasing_in_penalty() {
        let pre = DMatrix::from_fn(6, 4, |i, t| ((i * 3 + t * 5) % 7) as f64 * 0.1);
        for v in Variant::ALL {
            let vals: Vec<f64> = [0.1, 1.0, 10.0]
                .iter()
                .map(|&l| empirical_objective(&pre, &[1, 3], l, v, &WeightConstraints::SIMPLEX).unwrap())
                .collect();
            assert!(vals[0] <= vals[1] && vals[1] <= vals[2], "{v}: {vals:?}");
        }
    }

    #[test]
    fn variant_parse_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("three-way".parse::<Variant>().is_err());
    }
}
