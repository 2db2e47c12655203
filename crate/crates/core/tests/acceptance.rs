//! Acceptance checks, one line per criterion.
//!
//! Criteria 1-4 and 8 need the Dow Jones constituents panel used for the
//! empirical study. Point `NETARCH_DOW_CSV` at it (wide layout by default;
//! `NETARCH_DOW_LAYOUT=long` and `NETARCH_DOW_FIELD=return` override). They
//! report SKIP when the file is not available.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use netarch::data::{load_csv, Layout};
use netarch::ensemble::{cols_weights, minvar_weights, EnsembleMethod};
use netarch::evaluate::{
    build_report, dm_test, run_backtest, BacktestConfig, EvalReport, LossKind, ReportConfig,
};
use netarch::network_arch::{
    fit_network_logarch, fit_network_with, forecast_network_one_step, helmert_transform,
    NetworkEstimator, RhoSpec,
};
use netarch::rng::SplitMix64;
use netarch::simulate::{
    random_knn_weights, simulate_network_detailed, simulate_univariate, InnovationSpec,
    NetworkProcess, E_LOG_CHI2_1,
};
use netarch::univariate::{fit_logarch, forecast_one_step};
use netarch::{Field, ReturnPanel};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

// ---------------------------------------------------------------------------
// empirical backtest

struct Empirical {
    report: EvalReport,
    elapsed: Duration,
}

fn load_dow() -> Result<Option<ReturnPanel>, String> {
    let Ok(path) = std::env::var("NETARCH_DOW_CSV") else {
        return Ok(None);
    };
    let layout = match std::env::var("NETARCH_DOW_LAYOUT").as_deref() {
        Ok("long") => Layout::Long,
        _ => Layout::Wide,
    };
    let field = match std::env::var("NETARCH_DOW_FIELD").as_deref() {
        Ok("return") => Field::Return,
        _ => Field::Price,
    };
    load_csv(&path, layout, field)
        .map(|v| Some(v.panel))
        .map_err(|e| format!("{path}: {e}"))
}

fn empirical() -> Result<Option<Empirical>, String> {
    let Some(panel) = load_dow()? else {
        return Ok(None);
    };
    let config = BacktestConfig {
        window_len: panel.n_dates().saturating_sub(500),
        ..BacktestConfig::default()
    };
    let start = Instant::now();
    let table = run_backtest(&panel, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let report = build_report(&table, &ReportConfig::default()).map_err(|e| e.to_string())?;
    Ok(Some(Empirical { report, elapsed }))
}

const NO_DATA: &str = "companion Dow panel not provided (set NETARCH_DOW_CSV)";

fn criterion_1(e: &Empirical) -> Outcome {
    let r = &e.report;
    let get = |id: &str| r.model_loss(id).unwrap();
    let b = get("logarch");
    let checks = [
        ("logarch RMSFE", b.avg_rmsfe, 2.8202),
        ("logarch MAFE", b.avg_mafe, 2.0018),
        ("B.3.1 RMSFE", get("B.3.1").avg_rmsfe, 2.4457),
        ("B.10.3 MAFE", get("B.10.3").avg_mafe, 1.8559),
    ];
    let mut ok = e.elapsed < Duration::from_secs(30 * 60);
    let mut detail = format!("backtest {:.1}s;", e.elapsed.as_secs_f64());
    for (name, got, target) in checks {
        ok &= within(got, target, 0.05);
        detail.push_str(&format!(" {name} {got:.4} (target {target} ±5%);"));
    }
    check(ok, detail)
}

fn criterion_2(e: &Empirical) -> Outcome {
    let r = &e.report;
    let b = r.model_loss("logarch").unwrap();
    let worse: Vec<&str> = r
        .losses
        .iter()
        .filter(|l| l.model_id != "logarch")
        .filter(|l| !(l.avg_rmsfe < b.avg_rmsfe && l.avg_mafe < b.avg_mafe))
        .map(|l| l.model_id.as_str())
        .collect();
    check(
        worse.is_empty(),
        format!("network models not beating the benchmark on both losses: {worse:?}"),
    )
}

fn criterion_3(e: &Empirical) -> Outcome {
    let r = &e.report;
    let sq = &r.mcs_squared.superior_set;
    let ab = &r.mcs_absolute.superior_set;
    check(
        sq.iter().any(|m| m == "B.3.1") && ab.iter().any(|m| m == "B.10.3"),
        format!(
            "squared-loss set {sq:?} (reference B.3.1, B.5.3, B.10.3); absolute-loss set {ab:?} (reference B.10.3)"
        ),
    )
}

fn criterion_4(e: &Empirical) -> Outcome {
    let r = &e.report;
    let stat = |t: &str| {
        r.dm_row("B.3.1", t, LossKind::Squared)
            .and_then(|row| row.statistic)
    };
    let aapl = stat("AAPL");
    let vz = stat("VZ");
    let negative: Vec<&str> = r
        .tickers
        .iter()
        .filter(|t| !stat(t).is_some_and(|s| s > 0.0))
        .map(String::as_str)
        .collect();
    let ok = aapl.is_some_and(|s| (s - 5.47).abs() <= 1.0)
        && vz.is_some_and(|s| (s - 0.61).abs() <= 1.0)
        && negative.is_empty();
    check(
        ok,
        format!(
            "AAPL {aapl:?} (5.47 ± 1), VZ {vz:?} (0.61 ± 1), stocks with non-positive statistic {negative:?}"
        ),
    )
}

fn criterion_8(e: &Empirical) -> Outcome {
    let r = &e.report;
    let avg = |m| r.ensemble(m).unwrap().avg_rmsfe;
    let (s, mv, c) = (
        avg(EnsembleMethod::Simple),
        avg(EnsembleMethod::MinVar),
        avg(EnsembleMethod::Cols),
    );
    let ok = c <= mv
        && mv <= s
        && within(s, 2.4475, 0.10)
        && within(mv, 2.3616, 0.10)
        && within(c, 2.3484, 0.10);
    check(
        ok,
        format!(
            "COLS {c:.4} <= min-var {mv:.4} <= simple {s:.4} (targets 2.3484, 2.3616, 2.4475 ±10%)"
        ),
    )
}

// ---------------------------------------------------------------------------
// simulation oracles

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let n = 10;
    let reps = 50;
    let errors: Vec<Result<(f64, f64), String>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = SplitMix64::derive(0xacce, r as u64);
            let w = random_knn_weights(n, 3, rng.next_u64()).map_err(|e| e.to_string())?;
            let process = NetworkProcess {
                phi0: (0..n).map(|_| -9.0 + rng.next_f64()).collect(),
                rho: 0.4,
                gamma_diag: (0..n).map(|_| 0.2 + 0.4 * rng.next_f64()).collect(),
            };
            let sim = simulate_network_detailed(
                &process,
                &w,
                20_000,
                1000,
                &InnovationSpec {
                    seed: rng.next_u64(),
                },
            )
            .map_err(|e| e.to_string())?;
            let lv = common::log_sq(&sim.panel);
            let fit = fit_network_logarch(&lv, &w, 2).map_err(|e| e.to_string())?;
            let g = fit
                .gamma_diag
                .iter()
                .zip(&process.gamma_diag)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / n as f64;
            Ok(((fit.rho - 0.4).abs(), g))
        })
        .collect();
    let errors: Vec<(f64, f64)> = match errors.into_iter().collect() {
        Ok(v) => v,
        Err(e) => return Outcome::Fail(format!("replication failed: {e}")),
    };
    let rho_err = errors.iter().map(|e| e.0).sum::<f64>() / reps as f64;
    let gamma_err = errors.iter().map(|e| e.1).sum::<f64>() / reps as f64;

    let y = match simulate_univariate(0.1, &[0.5], 100_000, 1000, &InnovationSpec { seed: 77 }) {
        Ok(y) => y,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let ls: Vec<f64> = y.iter().map(|v| (v * v).ln()).collect();
    let uni = fit_logarch(&ls, 1).unwrap();
    let uni_err = (uni.phi0 - 0.1).abs().max((uni.gamma[0] - 0.5).abs());
    let elapsed = start.elapsed();

    check(
        rho_err <= 0.03
            && gamma_err <= 0.05
            && uni_err <= 0.02
            && elapsed < Duration::from_secs(300),
        format!(
            "mean |rho err| {rho_err:.4} (<= 0.03), mean |gamma err| {gamma_err:.4} (<= 0.05), \
             univariate max |phi err| {uni_err:.4} (<= 0.02), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let panels: Vec<(ReturnPanel, netarch::EdgeWeightMatrix)> = vec![
        common::network_panel(8, 600, 0.3, 1),
        common::network_panel(5, 250, 0.0, 2),
        common::network_panel(12, 1500, 0.5, 3),
        {
            let mut rng = SplitMix64::new(4);
            let r = DMatrix::from_fn(6, 400, |_, _| 0.01 * rng.next_normal());
            let p = ReturnPanel::new(
                (0..6).map(|i| format!("X{i}")).collect(),
                (0..400).map(|t| format!("d{t:04}")).collect(),
                r,
            )
            .unwrap();
            (p, common::ring(6))
        },
    ];
    let estimator = NetworkEstimator {
        rho: RhoSpec::Fixed(0.0),
        ..NetworkEstimator::default()
    };
    for (panel, w) in &panels {
        let lv = common::log_sq(panel);
        let fit = fit_network_with(&lv.values, w, &estimator, "W").unwrap();
        let last: Vec<f64> = lv.values.column(lv.n_dates() - 1).iter().copied().collect();
        let net = forecast_network_one_step(&fit, w, &last).unwrap();
        for i in 0..lv.n_stocks() {
            let row = lv.row(i);
            let uni = fit_logarch(&row, 1).unwrap();
            let f = forecast_one_step(&uni, &row).unwrap();
            for d in [
                fit.gamma_diag[i] - uni.gamma[0],
                fit.phi0[i] - uni.phi0,
                fit.mu_star[i] - uni.mu_star,
                net[i] - f,
            ] {
                worst = worst.max(d.abs());
            }
        }
    }
    check(
        worst <= 1e-8,
        format!(
            "max deviation from univariate fits and forecasts {worst:.2e} (<= 1e-8) over {} panels",
            panels.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        parts.push(format!(
            "{name} {} ({detail})",
            if pass { "ok" } else { "FAILED" }
        ));
    };

    // residual identity of the simulated process
    let w = common::ring(7);
    let process = NetworkProcess {
        phi0: vec![-9.0, -8.6, -9.3, -8.9, -9.1, -8.8, -9.2],
        rho: 0.35,
        gamma_diag: vec![0.2, 0.3, 0.25, 0.4, 0.1, 0.3, 0.2],
    };
    let sim =
        simulate_network_detailed(&process, &w, 2000, 500, &InnovationSpec { seed: 31 }).unwrap();
    let wy = w.weights() * &sim.log_sq;
    let mut worst: f64 = 0.0;
    for t in 0..2000 {
        for i in 0..7 {
            let lag = if t == 0 {
                sim.initial[i]
            } else {
                sim.log_sq[(i, t - 1)]
            };
            let r = sim.log_sq[(i, t)]
                - process.rho * wy[(i, t)]
                - process.gamma_diag[i] * lag
                - (process.phi0[i] - E_LOG_CHI2_1)
                - sim.log_eps_sq[(i, t)];
            worst = worst.max(r.abs());
        }
    }
    record("residual identity", worst <= 1e-10, format!("{worst:.1e}"));

    // Helmert transform annihilates fixed effects
    let mut rng = SplitMix64::new(8);
    let v = DMatrix::from_fn(6, 300, |_, _| rng.next_normal());
    let effects: Vec<f64> = (0..6).map(|_| 20.0 * rng.next_normal()).collect();
    let x = DMatrix::from_fn(6, 300, |i, t| v[(i, t)] + effects[i]);
    let gap = (helmert_transform(&x) - helmert_transform(&v)).abs().max();
    record("Helmert fixed effects", gap <= 1e-10, format!("{gap:.1e}"));

    // forecast solves the simultaneous system
    let lv = common::log_sq(&sim.panel);
    let fit = fit_network_logarch(&lv, &w, 2).unwrap();
    let last: Vec<f64> = lv.values.column(lv.n_dates() - 1).iter().copied().collect();
    let h = DVector::from_vec(forecast_network_one_step(&fit, &w, &last).unwrap());
    let c = fit.forecast_constants();
    let rhs = DVector::from_fn(7, |i, _| fit.gamma_diag[i] * last[i] + c[i]);
    let resid = ((DMatrix::identity(7, 7) - w.weights() * fit.rho) * &h - rhs)
        .abs()
        .max();
    record("forecast system", resid <= 1e-10, format!("{resid:.1e}"));

    // DM antisymmetry
    let mut exact = true;
    for s in 0..20 {
        let mut rng = SplitMix64::new(100 + s);
        let a: Vec<f64> = (0..120).map(|_| rng.next_normal()).collect();
        let b: Vec<f64> = (0..120).map(|_| 1.2 * rng.next_normal()).collect();
        for kind in [LossKind::Squared, LossKind::Absolute] {
            let ab = dm_test(&a, &b, kind).unwrap().statistic;
            let ba = dm_test(&b, &a, kind).unwrap().statistic;
            exact &= ab == -ba;
        }
    }
    record("DM antisymmetry", exact, "exact".into());

    // ensemble weights sum to one
    let mut worst_sum: f64 = 0.0;
    for s in 0..20 {
        let mut rng = SplitMix64::new(200 + s);
        let m = 2 + (s as usize % 6);
        let f = DMatrix::from_fn(80, m, |_, _| rng.next_normal());
        let y: Vec<f64> = (0..80).map(|_| rng.next_normal()).collect();
        let e = DMatrix::from_fn(80, m, |t, k| f[(t, k)] - y[t]);
        for w in [minvar_weights(&e).unwrap(), cols_weights(&y, &f).unwrap()] {
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    record(
        "ensemble weights sum",
        worst_sum <= 1e-10,
        format!("{worst_sum:.1e}"),
    );

    // no lookahead: corrupting data after a target date leaves earlier
    // forecasts untouched
    let (panel, _) = common::network_panel(11, 200, 0.3, 9);
    let config = BacktestConfig {
        window_len: 160,
        ..BacktestConfig::default()
    };
    let base = run_backtest(&panel, &config).unwrap();
    let cut = 20;
    let mut corrupted = panel.returns().clone();
    for t in 160 + cut + 1..200 {
        for i in 0..11 {
            corrupted[(i, t)] *= 37.0;
        }
    }
    let bad =
        ReturnPanel::new(panel.tickers().to_vec(), panel.dates().to_vec(), corrupted).unwrap();
    let after = run_backtest(&bad, &config).unwrap();
    let mut same = true;
    for k in 0..base.model_ids.len() {
        for j in 0..=cut {
            for i in 0..11 {
                same &= base.forecasts[k][(i, j)] == after.forecasts[k][(i, j)];
                same &= base.realized[(i, j)] == after.realized[(i, j)];
            }
        }
    }
    let changed = base.forecasts[0][(0, cut + 2)] != after.forecasts[0][(0, cut + 2)];
    record("no lookahead", same && changed, "exact".into());

    check(ok, parts.join("; "))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        // nothing to enumerate for test discovery
        return ExitCode::SUCCESS;
    }
    let emp = empirical();
    let data_criterion = |f: fn(&Empirical) -> Outcome| match &emp {
        Ok(Some(e)) => f(e),
        Ok(None) => Outcome::Skip(NO_DATA.to_string()),
        Err(msg) => Outcome::Fail(format!("empirical backtest failed: {msg}")),
    };
    let results = [
        ("1 average loss levels", data_criterion(criterion_1)),
        ("2 networks beat the benchmark", data_criterion(criterion_2)),
        ("3 model confidence sets", data_criterion(criterion_3)),
        ("4 DM spot checks", data_criterion(criterion_4)),
        ("5 parameter recovery", criterion_5()),
        ("6 rho = 0 reduction", criterion_6()),
        ("7 property suites", criterion_7()),
        ("8 ensemble ordering", data_criterion(criterion_8)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {name}: {tag} - {detail}");
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
