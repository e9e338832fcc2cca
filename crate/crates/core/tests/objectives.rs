mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use synthdesign::objectives::{
    closed_form, closed_form_one_way, closed_form_per_unit, closed_form_two_way, empirical_objective, ClosedFormInputs,
};
use synthdesign::{Variant, WeightConstraints};

fn cf(a: &[f64], sigma2: f64, treated: &[usize]) -> ClosedFormInputs {
    ClosedFormInputs::new(a.to_vec(), sigma2, treated).unwrap()
}

fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !set.contains(i)).collect()
}

#[test]
fn hand_values() {
    let c = cf(&[2.0; 7], 1.5, &[0, 1, 5]);
    assert!((closed_form_per_unit(&c) - 1.5 / 4.0).abs() < 1e-15);
    assert!((closed_form_two_way(&c) - 1.5 * (1.0 / 3.0 + 0.25)).abs() < 1e-15);
    assert!((closed_form_one_way(&c) - 1.5 * (1.0 / 3.0 + 0.25)).abs() < 1e-15);

    assert_eq!(closed_form_per_unit(&cf(&[0.0, 1.0], 1.0, &[0])), 2.0);
    assert_eq!(closed_form_two_way(&cf(&[0.0, 1.0], 1.0, &[0])), 3.0);

    let a = [0.0, 1.0, 2.0, 3.0];
    assert!((closed_form_per_unit(&cf(&a, 1.0, &[1, 2])) - 0.545_454_545_454_545_4).abs() < 1e-15);
    assert!((closed_form_two_way(&cf(&a, 1.0, &[0, 3])) - 1.0).abs() < 1e-15);
    assert!((closed_form_two_way(&cf(&a, 1.0, &[1, 2])) - 1.0).abs() < 1e-15);
    assert!((closed_form_two_way(&cf(&a, 1.0, &[0, 1])) - 3.0).abs() < 1e-15);
    assert!((closed_form_one_way(&cf(&a, 1.0, &[0, 2])) - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn perfect_fit_at_zero_penalty() {
    let pre = DMatrix::from_fn(4, 3, |_, t| t as f64 * 0.1);
    for v in Variant::ALL {
        let j = empirical_objective(&pre, &[1, 2], 0.0, v, &WeightConstraints::SIGNED).unwrap();
        assert!(j.abs() < 1e-14, "{v}: {j}");
    }
}

#[test]
fn objective_grows_with_penalty() {
    let p = common::random_panel(31, 7, 6, 6);
    for v in Variant::ALL {
        for cons in [WeightConstraints::SIMPLEX, WeightConstraints::SIGNED] {
            let js: Vec<f64> = [0.1, 1.0, 10.0]
                .iter()
                .map(|&l| empirical_objective(&p.pre(), &[0, 4], l, v, &cons).unwrap())
                .collect();
            assert!(js[0] <= js[1] && js[1] <= js[2], "{v}: {js:?}");
        }
    }
}

#[test]
fn empirical_matches_closed_form_on_one_period() {
    let mut r = common::rng(4);
    for _ in 0..200 {
        let n = r.gen_range(2..=10);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let k = r.gen_range(1..n);
        let mut treated = rand::seq::index::sample(&mut r, n, k).into_vec();
        treated.sort_unstable();
        let sigma2 = r.gen_range(0.1..2.0);
        let pre = DMatrix::from_column_slice(n, 1, &a);
        let c = cf(&a, sigma2, &treated);
        for v in Variant::ALL {
            let e = empirical_objective(&pre, &treated, sigma2, v, &WeightConstraints::SIGNED).unwrap();
            assert!((e - closed_form(v, &c)).abs() <= 1e-8, "{v}: {e} vs {}", closed_form(v, &c));
        }
    }
}

proptest! {
    #[test]
    fn one_way_at_least_two_way(a in proptest::collection::vec(-5.0f64..5.0, 2..12), mask in any::<u16>(), sigma2 in 0.01f64..4.0) {
        let n = a.len();
        let treated: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == 1).collect();
        prop_assume!(!treated.is_empty() && treated.len() < n);
        let c = cf(&a, sigma2, &treated);
        prop_assert!(closed_form_one_way(&c) >= closed_form_two_way(&c) * (1.0 - 1e-14));
    }

    #[test]
    fn two_way_is_complement_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 2..12), mask in any::<u16>(), sigma2 in 0.01f64..4.0) {
        let n = a.len();
        let treated: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == 1).collect();
        prop_assume!(!treated.is_empty() && treated.len() < n);
        let j = closed_form_two_way(&cf(&a, sigma2, &treated));
        let jc = closed_form_two_way(&cf(&a, sigma2, &complement(n, &treated)));
        prop_assert!((j - jc).abs() <= 1e-12 * j.abs().max(1.0));
    }

    #[test]
    fn closed_forms_bounded_below_by_group_terms(a in proptest::collection::vec(-5.0f64..5.0, 2..12), mask in any::<u16>(), sigma2 in 0.01f64..4.0) {
        let n = a.len();
        let treated: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == 1).collect();
        prop_assume!(!treated.is_empty() && treated.len() < n);
        let (k, nk) = (treated.len() as f64, (n - treated.len()) as f64);
        let c = cf(&a, sigma2, &treated);
        let tol = 1e-12 * sigma2;
        prop_assert!(closed_form_per_unit(&c) >= sigma2 / nk - tol);
        prop_assert!(closed_form_two_way(&c) >= sigma2 * (1.0 / k + 1.0 / nk) - tol);
        prop_assert!(closed_form_one_way(&c) >= sigma2 * (1.0 / k + 1.0 / nk) - tol);
    }
}
