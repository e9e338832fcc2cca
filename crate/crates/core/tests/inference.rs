mod common;

use synthdesign::estimators::Method;
use synthdesign::inference::{
    cyclic_shift, permutation_test, permutation_test_with, permute_periods, test_statistic, Refit, Scheme, TestOptions,
};
use synthdesign::selector::random_design;
use synthdesign::{select_design, Design, DesignProblem, Panel, TreatmentScenario, Variant};

fn designed(panel: &Panel, variant: Variant) -> Design {
    select_design(panel, &DesignProblem::new(variant, 3, 0.001)).unwrap()
}

#[test]
fn statistic_examples() {
    assert!((test_statistic(&[0.06; 4], 4) - 0.03).abs() < 1e-15);
    assert_eq!(test_statistic(&[0.0; 3], 3), 0.0);
    assert_eq!(test_statistic(&[0.01, -0.03], 2), test_statistic(&[-0.01, 0.03], 2));
}

#[test]
fn permutations() {
    assert_eq!(cyclic_shift(5, 2), vec![2, 3, 4, 0, 1]);
    assert_eq!(cyclic_shift(5, 0), vec![0, 1, 2, 3, 4]);
    assert_eq!(permute_periods(6, Scheme::Iid, 3, 9), permute_periods(6, Scheme::Iid, 3, 9));
    let mut o = permute_periods(20, Scheme::Iid, 1, 2);
    assert_ne!(o, permute_periods(20, Scheme::Iid, 2, 2));
    o.sort_unstable();
    assert_eq!(o, (0..20).collect::<Vec<_>>());
}

#[test]
fn null_on_constant_panel() {
    let p = common::constant_panel(8, 12, 9, 0.0);
    let d = designed(&p, Variant::TwoWay);
    for scheme in Scheme::ALL {
        let t = permutation_test(&p, &d, Method::TwoWay, scheme, 12, 0.1, 0).unwrap();
        assert_eq!(t.observed_stat, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(!t.reject);
    }
    // Nonzero level: the statistic is zero up to rounding.
    let p = common::constant_panel(8, 12, 9, 0.05);
    let t = permutation_test(&p, &d, Method::TwoWay, Scheme::Iid, 12, 0.1, 0).unwrap();
    assert!(t.observed_stat < 1e-15);
}

#[test]
fn large_effect_is_detected_with_forty_draws() {
    let base = common::random_panel(3, 10, 40, 35);
    for v in Variant::ALL {
        let d = designed(&base, v);
        // 0.05 outcome scale; effect ten times that.
        let y = base.apply_treatment(&d, &TreatmentScenario::homogeneous(10, 0.5, 5).unwrap()).unwrap();
        for scheme in Scheme::ALL {
            let t = permutation_test(&y, &d, Method::from(v), scheme, 40, 0.1, 1).unwrap();
            assert_eq!(t.n_draws, 40);
            assert!(t.reject, "{v} {scheme:?}: p = {}", t.p_value);
            // All 40 shifts include the identity, which ties the observed value.
            let floor = if scheme == Scheme::MovingBlock { 2.0 } else { 1.0 };
            assert!(t.p_value <= floor / 41.0 + 1e-15, "{v} {scheme:?}: p = {}", t.p_value);
        }
    }
}

#[test]
fn moving_block_is_capped_at_period_count() {
    let p = common::random_panel(4, 6, 10, 7);
    let d = designed(&p, Variant::OneWay);
    let t = permutation_test(&p, &d, Method::OneWay, Scheme::MovingBlock, 40, 0.1, 0).unwrap();
    assert_eq!((t.requested_draws, t.n_draws), (40, 10));
    assert_eq!(t.warnings.len(), 1);
    // Shift zero is the observed ordering.
    assert_eq!(t.reference[0], t.observed_stat);
}

#[test]
fn p_value_bounds_and_rejection_rule() {
    for seed in 0..12 {
        let p = common::random_panel(100 + seed, 8, 16, 12);
        let d = designed(&p, Variant::ALL[seed as usize % 3]);
        let m = Method::from(d.variant.unwrap());
        for scheme in Scheme::ALL {
            let t = permutation_test(&p, &d, m, scheme, 15, 0.2, seed).unwrap();
            let n = t.n_draws as f64;
            assert!(t.p_value >= 1.0 / (1.0 + n) && t.p_value <= 1.0);
            assert_eq!(t.reject, t.p_value <= 0.2 + 1e-12, "seed {seed}: p {}", t.p_value);
        }
    }
}

#[test]
fn deterministic_given_seed() {
    let p = common::random_panel(5, 8, 20, 16);
    let d = designed(&p, Variant::PerUnit);
    let a = permutation_test(&p, &d, Method::PerUnit, Scheme::Iid, 20, 0.1, 5).unwrap();
    let b = permutation_test(&p, &d, Method::PerUnit, Scheme::Iid, 20, 0.1, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn random_designs_need_a_penalty_unless_diff_in_means() {
    let p = common::random_panel(6, 8, 12, 9);
    let d = random_design(8, 3, 1).unwrap();
    assert!(permutation_test(&p, &d, Method::SyntheticControlRandom, Scheme::Iid, 5, 0.1, 0).is_err());
    assert!(permutation_test(&p, &d, Method::DiffInMeansRandom, Scheme::Iid, 5, 0.1, 0).is_ok());
    let mut d = d;
    d.lambda = Some(0.01);
    assert!(permutation_test(&p, &d, Method::SyntheticControlRandom, Scheme::Iid, 5, 0.1, 0).is_ok());
}

#[test]
fn design_refit_can_differ_from_weight_refit() {
    let p = common::random_panel(7, 8, 12, 9);
    let d = designed(&p, Variant::TwoWay);
    let opts = |refit| TestOptions {
        scheme: Scheme::Iid,
        n_draws: 10,
        alpha: 0.1,
        seed: 3,
        refit,
    };
    let w = permutation_test_with(&p, &d, Method::TwoWay, &opts(Refit::Weights)).unwrap();
    let r = permutation_test_with(&p, &d, Method::TwoWay, &opts(Refit::Design)).unwrap();
    assert_eq!(w.observed_stat, r.observed_stat);
    // Re-selecting can only lower the objective, so references differ in general.
    assert_eq!(r.refit, Refit::Design);
    assert_eq!(r.reference.len(), 10);
}

#[test]
fn bad_options_rejected() {
    let p = common::random_panel(8, 6, 8, 6);
    let d = designed(&p, Variant::TwoWay);
    assert!(permutation_test(&p, &d, Method::TwoWay, Scheme::Iid, 0, 0.1, 0).is_err());
    assert!(permutation_test(&p, &d, Method::TwoWay, Scheme::Iid, 5, 1.0, 0).is_err());
    assert!(permutation_test(&p.with_t_pre(8).unwrap(), &d, Method::TwoWay, Scheme::Iid, 5, 0.1, 0).is_err());
}
