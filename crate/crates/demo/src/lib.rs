//! Browser demo: simulate a network log-ARCH panel, estimate it, rebuild the
//! network from returns and run a small rolling backtest.
//!
//! The exported functions take plain numbers and strings and return JSON
//! text, so the page needs no generated bindings beyond `wasm-bindgen`.
//! The `*_json` functions hold the logic and are usable natively.

use netarch::data::{log_squared, ZeroMode};
use netarch::evaluate::{
    build_report, run_backtest, BacktestConfig, McsConfig, ModelSpec, ReportConfig,
};
use netarch::network::{
    dist_correlation, dist_euclidean, dist_logarch, weights_inverse_distance, weights_knn,
    DistanceKind, InfoCriterion,
};
use netarch::network_arch::fit_network_logarch;
use netarch::simulate::{random_knn_weights, simulate_network, InnovationSpec, NetworkProcess};
use netarch::{EdgeWeightMatrix, NetArchError, ReturnPanel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Draws discarded before the first kept date.
const BURN_IN: usize = 500;
const MAX_STOCKS: usize = 40;
const MAX_DATES: usize = 20_000;
const MAX_SERIES_POINTS: usize = 400;

/// Panel design shared by all operations: a random k-nearest-neighbour
/// network among `n` stocks and a network log-ARCH(1) process on it.
#[derive(Debug, Clone, Copy)]
pub struct Design {
    pub n: usize,
    pub t_len: usize,
    pub rho: f64,
    pub k: usize,
    pub seed: u64,
}

impl Design {
    fn check(&self) -> Result<(), String> {
        if !(3..=MAX_STOCKS).contains(&self.n) {
            return Err(format!(
                "number of stocks must be between 3 and {MAX_STOCKS}"
            ));
        }
        if !(200..=MAX_DATES).contains(&self.t_len) {
            return Err(format!(
                "number of dates must be between 200 and {MAX_DATES}"
            ));
        }
        if self.k == 0 || self.k >= self.n {
            return Err("neighbours must be between 1 and n - 1".into());
        }
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err("rho must lie in (-1, 1)".into());
        }
        Ok(())
    }

    fn process(&self) -> NetworkProcess {
        NetworkProcess {
            phi0: (0..self.n).map(|i| -9.0 + 0.1 * (i % 5) as f64).collect(),
            rho: self.rho,
            gamma_diag: (0..self.n).map(|i| 0.15 + 0.05 * (i % 4) as f64).collect(),
        }
    }

    fn simulate(&self) -> Result<(NetworkProcess, EdgeWeightMatrix, ReturnPanel), String> {
        self.check()?;
        let w = random_knn_weights(self.n, self.k, self.seed).map_err(msg)?;
        let process = self.process();
        let spec = InnovationSpec {
            seed: self.seed.wrapping_add(1),
        };
        let panel = simulate_network(&process, &w, self.t_len, BURN_IN, &spec).map_err(msg)?;
        Ok((process, w, panel))
    }
}

fn msg(e: NetArchError) -> String {
    e.to_string()
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Evenly spaced subsample so the page never plots more than a few hundred
/// points.
fn thin(series: &[f64]) -> Vec<f64> {
    let step = series.len().div_ceil(MAX_SERIES_POINTS).max(1);
    series.iter().step_by(step).copied().collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub tickers: Vec<String>,
    pub rho_true: f64,
    pub rho_hat: f64,
    pub rho_se: f64,
    pub gamma_true: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub instrument_depth: usize,
    pub weights: Vec<Vec<f64>>,
    /// Log-squared returns of the first stock, thinned.
    pub log_sq_first: Vec<f64>,
}

pub fn simulate_and_fit_json(design: Design) -> Result<String, String> {
    let (process, w, panel) = design.simulate()?;
    let lv = log_squared(&panel, ZeroMode::FloorMinNonzero).map_err(msg)?;
    let fit = fit_network_logarch(&lv, &w, 3).map_err(msg)?;
    to_json(&FitOutput {
        tickers: panel.tickers().to_vec(),
        rho_true: process.rho,
        rho_hat: fit.rho,
        rho_se: fit.std_errors[0],
        gamma_true: process.gamma_diag,
        gamma_hat: fit.gamma_diag,
        instrument_depth: fit.instrument_depth,
        weights: rows(w.weights()),
        log_sq_first: thin(&lv.row(0)),
    })
}

#[derive(Debug, Serialize)]
pub struct NetworkOutput {
    pub tickers: Vec<String>,
    pub distance: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub true_weights: Vec<Vec<f64>>,
    /// Share of true edges that also appear in the estimated network.
    pub edge_recall: f64,
}

/// Rebuilds a network from simulated returns. `distance` is one of
/// `euclidean`, `correlation`, `logarch`; `weighting` is `invdist` or `knn`.
pub fn build_network_json(
    design: Design,
    distance: &str,
    weighting: &str,
    knn_k: usize,
) -> Result<String, String> {
    let (_, w_true, panel) = design.simulate()?;
    let kind = match distance {
        "euclidean" => DistanceKind::Euclidean,
        "correlation" => DistanceKind::Correlation,
        "logarch" => DistanceKind::LogarchAr,
        other => return Err(format!("unknown distance {other:?}")),
    };
    let d = match kind {
        DistanceKind::Euclidean => dist_euclidean(&panel),
        DistanceKind::Correlation => dist_correlation(&panel).map_err(msg)?,
        DistanceKind::LogarchAr => {
            let lv = log_squared(&panel, ZeroMode::FloorMinNonzero).map_err(msg)?;
            dist_logarch(&lv, 5, InfoCriterion::Bic).map_err(msg)?
        }
    };
    let w = match weighting {
        "invdist" => weights_inverse_distance(&d, true).map_err(msg)?,
        "knn" => weights_knn(&d, knn_k).map_err(msg)?,
        other => return Err(format!("unknown weighting {other:?}")),
    };
    let (est, truth) = (w.weights(), w_true.weights());
    let true_edges = truth.iter().filter(|&&v| v > 0.0).count();
    let hits = truth
        .iter()
        .zip(est.iter())
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .count();
    to_json(&NetworkOutput {
        tickers: d.tickers.clone(),
        distance: rows(&d.d),
        weights: rows(est),
        true_weights: rows(truth),
        edge_recall: hits as f64 / true_edges.max(1) as f64,
    })
}

#[derive(Debug, Serialize)]
pub struct ModelRow {
    pub model_id: String,
    pub avg_rmsfe: f64,
    pub avg_mafe: f64,
    pub in_mcs: bool,
}

#[derive(Debug, Serialize)]
pub struct BacktestOutput {
    pub n_forecasts: usize,
    pub models: Vec<ModelRow>,
    pub ensembles: Vec<ModelRow>,
    pub realized_first: Vec<f64>,
    /// Forecasts of the first stock, one thinned series per model.
    pub forecasts_first: Vec<Vec<f64>>,
}

/// Rolling one-step backtest over the last `t_len - window` dates.
/// `models` is a comma-separated list of model ids such as
/// `logarch,A.1,B.3.2`.
pub fn backtest_json(design: Design, window: usize, models: &str) -> Result<String, String> {
    let (_, _, panel) = design.simulate()?;
    let specs = models
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<ModelSpec>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(msg)?;
    if !specs.iter().any(ModelSpec::is_benchmark) {
        return Err("the model list must include logarch".into());
    }
    let config = BacktestConfig {
        window_len: window,
        models: specs,
        ..BacktestConfig::default()
    };
    let table = run_backtest(&panel, &config).map_err(msg)?;
    let report = build_report(
        &table,
        &ReportConfig {
            mcs: McsConfig {
                bootstrap_reps: 500,
                ..McsConfig::default()
            },
            ensemble_burn_in: (table.horizon() / 3).max(1),
            ..ReportConfig::default()
        },
    )
    .map_err(msg)?;
    let models = report
        .losses
        .iter()
        .map(|l| ModelRow {
            model_id: l.model_id.clone(),
            avg_rmsfe: l.avg_rmsfe,
            avg_mafe: l.avg_mafe,
            in_mcs: report.mcs_squared.superior_set.contains(&l.model_id),
        })
        .collect();
    let ensembles = report
        .ensembles
        .iter()
        .map(|e| ModelRow {
            model_id: format!("{:?}", e.method).to_lowercase(),
            avg_rmsfe: e.avg_rmsfe,
            avg_mafe: e.avg_mafe,
            in_mcs: false,
        })
        .collect();
    to_json(&BacktestOutput {
        n_forecasts: report.n_forecasts,
        models,
        ensembles,
        realized_first: thin(&table.realized.row(0).iter().copied().collect::<Vec<_>>()),
        forecasts_first: table
            .forecasts
            .iter()
            .map(|f| thin(&f.row(0).iter().copied().collect::<Vec<_>>()))
            .collect(),
    })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_and_fit(
    n: usize,
    t_len: usize,
    rho: f64,
    k: usize,
    seed: u32,
) -> Result<String, JsValue> {
    js(simulate_and_fit_json(Design {
        n,
        t_len,
        rho,
        k,
        seed: seed as u64,
    }))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn build_network(
    n: usize,
    t_len: usize,
    rho: f64,
    k: usize,
    seed: u32,
    distance: &str,
    weighting: &str,
    knn_k: usize,
) -> Result<String, JsValue> {
    let design = Design {
        n,
        t_len,
        rho,
        k,
        seed: seed as u64,
    };
    js(build_network_json(design, distance, weighting, knn_k))
}

#[wasm_bindgen]
pub fn backtest(
    n: usize,
    t_len: usize,
    rho: f64,
    k: usize,
    seed: u32,
    window: usize,
    models: &str,
) -> Result<String, JsValue> {
    let design = Design {
        n,
        t_len,
        rho,
        k,
        seed: seed as u64,
    };
    js(backtest_json(design, window, models))
}
