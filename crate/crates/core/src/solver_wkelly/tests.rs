use super::*;
use crate::domain::{GroundNorm, SimplexWeights};
use crate::solver_kelly::kelly_objective;

fn log_rows(rows: &[Vec<f64>]) -> ReturnsMatrix {
    ReturnsMatrix::from_rows(rows, ReturnKind::Log).unwrap()
}

fn small() -> ReturnsMatrix {
    log_rows(&[
        vec![0.05, -0.03, 0.01],
        vec![-0.04, 0.04, 0.00],
        vec![0.02, 0.01, -0.02],
        vec![0.03, -0.02, 0.02],
    ])
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn layout_for_type_two() {
    let s = log_rows(&[vec![0.1, 0.0], vec![0.0, 0.1], vec![0.05, 0.05]]);
    let prog = build_program(&s, &BallSpec::type2(0.1).unwrap()).unwrap();
    assert_eq!(
        prog.layout,
        VariableLayout {
            weights: 2,
            v_rows: 3,
            v_cols: 2,
            lambda: 1
        }
    );
    assert_eq!(prog.layout.total(), 9);
    let coef = prog.objective_terms.iter().find_map(|t| match t {
        ObjectiveTerm::PerspectivePower { coefficient, .. } => Some(*coefficient),
        _ => None,
    });
    assert!((coef.unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn order_one_uses_norm_constraints() {
    let s = log_rows(&[vec![0.1, 0.0], vec![0.0, 0.1], vec![0.05, 0.05]]);
    let ball = BallSpec::new(1.0, 0.1, GroundNorm::L2).unwrap();
    let prog = build_program(&s, &ball).unwrap();
    let bounds = prog.constraints.iter().filter(|c| matches!(c, Constraint::DualNormBound(_))).count();
    assert_eq!(bounds, 3);
    assert!(!prog.objective_terms.iter().any(|t| matches!(t, ObjectiveTerm::PerspectivePower { .. })));
}

#[test]
fn entropy_convention() {
    assert_eq!(entropy_term(&[0.0, 1.0], &[0.0, 1.0]), ExtReal::Finite(0.0));
    assert_eq!(entropy_term(&[0.5, 0.5], &[0.0, 1.0]), ExtReal::NegInf);
    let prog = build_program(&small(), &BallSpec::type2(0.1).unwrap()).unwrap();
    let v = vec![vec![0.5, 0.5, 0.0]; 4];
    assert_eq!(prog.objective(&[0.0, 0.0, 1.0], &v, 1.0).unwrap(), ExtReal::NegInf);
    assert!(prog.objective(&[0.5, 0.5, 0.0], &v, 1.0).unwrap().is_finite());
}

#[test]
fn perspective_convention_at_zero_multiplier() {
    let ball = BallSpec::type2(0.1).unwrap();
    assert_eq!(perspective_term(&[0.0, 0.0], 0.0, &ball).unwrap(), ExtReal::Finite(0.0));
    assert_eq!(perspective_term(&[0.2, 0.0], 0.0, &ball).unwrap(), ExtReal::PosInf);
    // ‖v‖²/(4λ) at p = 2
    let x = perspective_term(&[0.6, 0.8], 2.0, &ball).unwrap().to_f64();
    assert!((x - 1.0 / 8.0).abs() < 1e-15);
    let prog = build_program(&small(), &ball).unwrap();
    let v = vec![vec![1.0 / 3.0; 3]; 4];
    assert_eq!(prog.objective(&[1.0 / 3.0; 3], &v, 0.0).unwrap(), ExtReal::NegInf);
}

#[test]
fn unsupported_order() {
    assert!(matches!(BallSpec::new(0.5, 0.1, GroundNorm::L2), Err(Error::UnsupportedOrder(_))));
}

#[test]
fn zero_radius_matches_kelly_on_dominance() {
    let s = log_rows(&[vec![0.02, 0.01], vec![0.00, -0.01]]);
    let sol = solve_wkelly(&s, &BallSpec::type2(0.0).unwrap(), &settings()).unwrap();
    let kelly = solve_kelly(&s, &settings()).unwrap();
    assert!((sol.weights[0] - 1.0).abs() < 1e-6);
    assert!((sol.objective - kelly.objective).abs() < 1e-6);
    assert!(sol.lambda.is_infinite());
    let cert = certify_solution(&sol, &s, &BallSpec::type2(0.0).unwrap());
    assert!(cert.consistency_gap.unwrap() <= 1e-6, "{cert:?}");
}

#[test]
fn single_asset_closed_form() {
    let s = log_rows(&[vec![0.03], vec![-0.01], vec![0.02]]);
    let mean = 0.04 / 3.0;
    for eps in [0.001, 0.01, 0.1] {
        let sol = solve_wkelly(&s, &BallSpec::type2(eps).unwrap(), &settings()).unwrap();
        assert!((sol.objective - (mean - eps)).abs() < 1e-6, "{eps}: {}", sol.objective);
    }
}

#[test]
fn duplicate_columns_are_symmetric() {
    let s = log_rows(&[vec![0.03, 0.03], vec![-0.02, -0.02], vec![0.01, 0.01]]);
    let ball = BallSpec::type2(0.01).unwrap();
    let sol = solve_wkelly(&s, &ball, &settings()).unwrap();
    let cfg = InnerEvalConfig::default();
    let at_sol = robust_objective(&sol.weights, &s, &ball, &cfg).unwrap();
    let at_half = robust_objective(&SimplexWeights::uniform(2), &s, &ball, &cfg).unwrap();
    assert!((at_sol - at_half).abs() < 1e-6);
}

#[test]
fn matches_oracle_for_every_norm_and_order() {
    let s = small();
    for norm in [GroundNorm::L2, GroundNorm::L1, GroundNorm::Linf] {
        for p in [1.0, 1.5, 2.0, 3.0] {
            for eps in [0.005, 0.03] {
                let ball = BallSpec::new(p, eps, norm).unwrap();
                let sol = solve_wkelly(&s, &ball, &settings())
                    .unwrap_or_else(|e| panic!("{norm:?} p={p} eps={eps}: {e}"));
                let cert = certify_solution(&sol, &s, &ball);
                assert!(cert.passes(1e-5), "{norm:?} p={p} eps={eps}: {cert:?}");
            }
        }
    }
}

#[test]
fn nested_balls_and_upper_bound() {
    let s = small();
    let kelly = solve_kelly(&s, &settings()).unwrap().objective;
    let mut prev = f64::INFINITY;
    for eps in [0.0, 0.001, 0.01, 0.1, 1.0] {
        let obj = solve_wkelly(&s, &BallSpec::type2(eps).unwrap(), &settings()).unwrap().objective;
        assert!(obj <= prev + 1e-8, "{eps}");
        assert!(obj <= kelly + 1e-8);
        prev = obj;
    }
}

#[test]
fn certificate_flags_negative_multiplier() {
    let s = small();
    let ball = BallSpec::type2(0.01).unwrap();
    let mut sol = solve_wkelly(&s, &ball, &settings()).unwrap();
    sol.lambda = -1.0;
    let cert = certify_solution(&sol, &s, &ball);
    assert!(!cert.feasibility.is_feasible());
    assert!(!cert.passes(1.0));
}

#[test]
fn weights_and_samples_are_feasible() {
    let s = small();
    let ball = BallSpec::new(1.0, 0.02, GroundNorm::L2).unwrap();
    let sol = solve_wkelly(&s, &ball, &settings()).unwrap();
    for vj in &sol.v {
        assert!(GroundNorm::L2.eval(vj) <= sol.lambda + 1e-8);
    }
    assert!(kelly_objective(&sol.weights, &s).unwrap() >= sol.objective);
}



