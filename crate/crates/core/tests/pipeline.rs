use std::fs;

use tempfile::TempDir;
use wkelly_core::backtest::{performance_metrics, run_constant_mix};
use wkelly_core::data_ingest::{load_prices, log_returns, simple_returns, PriceFormat};
use wkelly_core::experiments::diversification_sweep;
use wkelly_core::inner_oracle::{robust_objective, InnerEvalConfig};
use wkelly_core::solver_wkelly::{certify_solution, solve_wkelly};
use wkelly_core::synthetic::ten_asset_fixture;
use wkelly_core::{BallSpec, Error, GroundNorm, SimplexWeights, SolverSettings};

#[test]
fn csv_round_trip_then_solve_and_backtest() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("prices.csv");
    let table = ten_asset_fixture();
    table.write_csv(fs::File::create(&path).unwrap()).unwrap();
    let loaded = load_prices(&path, PriceFormat::WideCsv).unwrap();
    assert_eq!(loaded.labels(), table.labels());
    assert_eq!(loaded.n_periods(), 252);
    for t in [0, 100, 252] {
        for (a, b) in loaded.row(t).iter().zip(table.row(t)) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    let train = loaded.slice_rows(0, 127).unwrap();
    let test = loaded.slice_rows(126, 253).unwrap();
    let samples = log_returns(&train).unwrap();
    let ball = BallSpec::type2(0.002).unwrap();
    let sol = solve_wkelly(&samples, &ball, &SolverSettings::default()).unwrap();
    let cert = certify_solution(&sol, &samples, &ball);
    assert!(cert.passes(1e-5), "{cert:?}");

    let tr = run_constant_mix(&sol.weights, &simple_returns(&test).unwrap()).unwrap();
    assert_eq!(tr.values.len(), 127);
    let m = performance_metrics(&tr, 252).unwrap();
    assert!((m.log_final_value - tr.values[126].ln()).abs() < 1e-12);
}

#[test]
fn robust_solution_beats_equal_weights_under_its_own_objective() {
    let samples = log_returns(&ten_asset_fixture()).unwrap();
    let cfg = InnerEvalConfig::default();
    for norm in [GroundNorm::L2, GroundNorm::L1, GroundNorm::Linf] {
        let ball = BallSpec::new(2.0, 0.003, norm).unwrap();
        let sol = solve_wkelly(&samples, &ball, &SolverSettings::default()).unwrap();
        let at_sol = robust_objective(&sol.weights, &samples, &ball, &cfg).unwrap();
        let at_uniform = robust_objective(&SimplexWeights::uniform(10), &samples, &ball, &cfg).unwrap();
        assert!(at_sol >= at_uniform - 1e-9, "{norm:?}");
        assert!((at_sol - sol.objective).abs() <= 1e-6, "{norm:?}");
    }
}

#[test]
fn sweep_concentration_falls_over_the_range() {
    let samples = log_returns(&ten_asset_fixture()).unwrap();
    let grid = [0.0, 0.1, 0.2, 0.3, 0.4, 1.0, 5.0, 50.0];
    let table = diversification_sweep(&samples, &grid, 2.0, GroundNorm::L2, &SolverSettings::default()).unwrap();
    let herf: Vec<f64> = table.rows.iter().map(|r| r.herfindahl.unwrap()).collect();
    assert!(herf[0] >= *herf.last().unwrap());
    assert!((herf.last().unwrap() - 0.1).abs() < 1e-4);
    let eps: Vec<f64> = table.rows.iter().map(|r| r.epsilon).collect();
    assert!(eps.windows(2).all(|e| e[0] < e[1]));
}

#[test]
fn malformed_files_are_rejected_with_location() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("gap.csv");
    fs::write(&path, "date,A,B\n2020-01-01,1,2\n2020-01-02,,2\n").unwrap();
    match load_prices(&path, PriceFormat::WideCsv) {
        Err(Error::MissingValue { line, column, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(column, "A");
        }
        other => panic!("{other:?}"),
    }
    fs::write(&path, "date,A\n2020-01-02,1\n2020-01-01,2\n").unwrap();
    assert!(matches!(load_prices(&path, PriceFormat::WideCsv), Err(Error::NonMonotoneDates { line: 3, .. })));
    let missing = dir.path().join("none.csv");
    assert!(matches!(load_prices(&missing, PriceFormat::WideCsv), Err(Error::Io { .. })));
}
