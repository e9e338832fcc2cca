mod common;

use rand::Rng;
use synthdesign::mip::{
    assignment_from_design, build_cardinality_free_model, build_model, export_mip, read_mps, write_mps, Sense, VarKind,
};
use synthdesign::objectives::empirical_objective;
use synthdesign::{select_design, Design, DesignProblem, Variant, WeightConstraints};

#[test]
fn per_unit_variable_counts_follow_the_formulation() {
    for (n, t) in [(3, 2), (5, 4), (7, 1)] {
        let p = common::random_panel(n as u64, n, t + 1, t);
        let m = build_model(&p, &DesignProblem::new(Variant::PerUnit, 1, 0.5)).unwrap();
        assert_eq!(m.count(VarKind::Binary, "D_"), n);
        assert_eq!(m.count(VarKind::Continuous, "W_"), n * n);
        assert_eq!(m.count(VarKind::Continuous, "Q_"), n * n);
        assert_eq!(m.count(VarKind::Continuous, "Z_"), n * t);
        assert!(m.vars.iter().filter(|v| v.name.starts_with("Z_")).all(|v| v.lower == f64::NEG_INFINITY));
    }
}

#[test]
fn two_way_has_weight_sum_of_two() {
    let p = common::random_panel(1, 6, 5, 4);
    let (m, text) = export_mip(&p, &DesignProblem::new(Variant::TwoWay, 3, 0.2)).unwrap();
    let row = m.row_by_name("WSUM").unwrap();
    assert_eq!((row.sense, row.rhs, row.coefs.len()), (Sense::Eq, 2.0, 6));
    assert!(text.contains(" E  WSUM\n"));
    assert!(text.contains("QMATRIX"));
    assert!(text.starts_with("NAME"));
    assert!(text.trim_end().ends_with("ENDATA"));
}

#[test]
fn export_is_deterministic_and_reads_back() {
    let p = common::random_panel(2, 6, 5, 4);
    for v in Variant::ALL {
        let prob = DesignProblem::new(v, 2, 0.2);
        let (m, a) = export_mip(&p, &prob).unwrap();
        let (_, b) = export_mip(&p, &prob).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_mps(&a).unwrap().canonical(), m.clone().canonical());
        assert_eq!(write_mps(&read_mps(&a).unwrap()), a, "{v}");
    }
}

#[test]
fn signed_weights_are_not_exportable() {
    let p = common::random_panel(2, 5, 5, 4);
    let prob = DesignProblem::new(Variant::PerUnit, 2, 0.2).with_constraints(WeightConstraints::SIGNED);
    let err = export_mip(&p, &prob).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn assignments_evaluate_to_the_empirical_objective() {
    for v in Variant::ALL {
        for seed in 0..10u64 {
            let mut r = common::rng(seed * 31 + v as u64);
            let n = r.gen_range(3..=7);
            let t = r.gen_range(1..=5);
            let k = r.gen_range(1..n);
            let lambda = r.gen_range(0.01..0.5);
            let p = common::random_panel(seed, n, t + 1, t);
            let prob = DesignProblem::new(v, k, lambda);
            let (m, text) = export_mip(&p, &prob).unwrap();
            // Any treated set with its optimal inner weights is feasible.
            let mut treated = rand::seq::index::sample(&mut r, n, k).into_vec();
            treated.sort_unstable();
            let cons = WeightConstraints::SIMPLEX;
            let mut d = Design::from_treated(n, &treated).unwrap();
            d.weights = Some(synthdesign::weights::solve_weights(v, &p.pre(), &treated, lambda, &cons).unwrap());
            d.lambda = Some(lambda);
            d.variant = Some(v);
            let x = assignment_from_design(&m, &p, &d).unwrap();
            assert!(m.max_violation(&x) <= 1e-9, "{v} seed {seed}: {}", m.max_violation(&x));
            let want = empirical_objective(&p.pre(), &treated, lambda, v, &cons).unwrap();
            assert!((m.objective_value(&x) - want).abs() <= 1e-9, "{v} seed {seed}");
            let back = read_mps(&text).unwrap();
            assert!((back.objective_value(&x) - want).abs() <= 1e-9, "{v} seed {seed} (read back)");
        }
    }
}

#[test]
fn tampered_assignment_is_infeasible() {
    let p = common::random_panel(5, 5, 4, 3);
    let prob = DesignProblem::new(Variant::TwoWay, 2, 0.1);
    let d = select_design(&p, &prob).unwrap();
    let (m, _) = export_mip(&p, &prob).unwrap();
    let mut x = assignment_from_design(&m, &p, &d).unwrap();
    let j = m.var_index(&format!("D_{}", d.controls()[0])).unwrap();
    x[j] = 1.0;
    assert!(m.max_violation(&x) >= 1.0 - 1e-12);
}

#[test]
fn cardinality_free_model_is_export_only() {
    let p = common::random_panel(6, 5, 4, 3);
    let m = build_cardinality_free_model(&p, 0.1).unwrap();
    assert!(m.row_by_name("CARD").is_none());
    assert!(m.row_by_name("RATIO").is_some());
    let text = write_mps(&m);
    assert!(text.contains("QCMATRIX"));
    assert_eq!(read_mps(&text).unwrap().canonical(), m.canonical());
}
