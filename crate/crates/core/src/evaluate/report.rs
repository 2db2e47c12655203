use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ForecastMeta, ForecastTable};
use crate::ensemble::{rolling_combination, EnsembleMethod, EnsembleWeights, DEFAULT_BURN_IN};
use crate::error::{NetArchError, Result};

use super::backtest::BENCHMARK_ID;
use super::dm::{dm_test, LossKind};
use super::mcs::{mcs, McsConfig, McsResult};
use super::metrics::{average_loss_series, mafe, rmsfe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub benchmark_id: String,
    pub mcs: McsConfig,
    pub ensemble_burn_in: usize,
    /// Models combined by the ensembles; every model in the table,
    /// benchmark included, when absent.
    pub ensemble_models: Option<Vec<String>>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            benchmark_id: BENCHMARK_ID.to_string(),
            mcs: McsConfig::default(),
            ensemble_burn_in: DEFAULT_BURN_IN,
            ensemble_models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLoss {
    pub model_id: String,
    pub rmsfe: Vec<f64>,
    pub mafe: Vec<f64>,
    pub avg_rmsfe: f64,
    pub avg_mafe: f64,
}

/// Diebold-Mariano comparison of the benchmark against one network model
/// for one stock. Positive statistics favour the network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmRow {
    pub model_id: String,
    pub ticker: String,
    pub loss: LossKind,
    /// Absent when the two error series have identical losses.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub mean_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub method: EnsembleMethod,
    pub rmsfe: Vec<f64>,
    pub mafe: Vec<f64>,
    pub avg_rmsfe: f64,
    pub avg_mafe: f64,
    /// Weights used on the last evaluation date, one entry per stock.
    pub final_weights: Vec<EnsembleWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub tickers: Vec<String>,
    pub n_forecasts: usize,
    pub forecast_meta: Option<ForecastMeta>,
    pub losses: Vec<ModelLoss>,
    /// Network model with the lowest and highest average RMSFE.
    pub best_network: Option<String>,
    pub worst_network: Option<String>,
    pub dm: Vec<DmRow>,
    pub mcs_squared: McsResult,
    pub mcs_absolute: McsResult,
    pub ensembles: Vec<EnsembleSummary>,
    /// Content hashes of the input artifacts, keyed by file name.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl EvalReport {
    pub fn model_loss(&self, id: &str) -> Option<&ModelLoss> {
        self.losses.iter().find(|l| l.model_id == id)
    }

    pub fn dm_row(&self, id: &str, ticker: &str, loss: LossKind) -> Option<&DmRow> {
        self.dm
            .iter()
            .find(|r| r.model_id == id && r.ticker == ticker && r.loss == loss)
    }

    pub fn ensemble(&self, method: EnsembleMethod) -> Option<&EnsembleSummary> {
        self.ensembles.iter().find(|e| e.method == method)
    }

    /// Long-format loss table: `model_id,ticker,rmsfe,mafe`, with an
    /// `AVERAGE` row per model.
    pub fn loss_table_csv(&self) -> String {
        let mut s = String::from("model_id,ticker,rmsfe,mafe\n");
        let rows = self
            .losses
            .iter()
            .map(|l| {
                (
                    l.model_id.clone(),
                    &l.rmsfe,
                    &l.mafe,
                    l.avg_rmsfe,
                    l.avg_mafe,
                )
            })
            .chain(self.ensembles.iter().map(|e| {
                (
                    format!(
                        "ensemble_{}",
                        serde_json::to_value(e.method).unwrap().as_str().unwrap()
                    ),
                    &e.rmsfe,
                    &e.mafe,
                    e.avg_rmsfe,
                    e.avg_mafe,
                )
            }));
        for (id, r, m, ar, am) in rows {
            for (i, t) in self.tickers.iter().enumerate() {
                s.push_str(&format!("{id},{t},{},{}\n", r[i], m[i]));
            }
            s.push_str(&format!("{id},AVERAGE,{ar},{am}\n"));
        }
        s
    }
}

/// Computes losses, DM tests against the benchmark, both model confidence
/// sets and the three ensembles from a forecast table.
pub fn build_report(table: &ForecastTable, config: &ReportConfig) -> Result<EvalReport> {
    let bench = table.model_index(&config.benchmark_id).ok_or_else(|| {
        NetArchError::invalid(format!(
            "benchmark {} not in forecast table",
            config.benchmark_id
        ))
    })?;
    let n = table.tickers.len();
    let horizon = table.horizon();
    let n_models = table.model_ids.len();

    let losses: Vec<ModelLoss> = (0..n_models)
        .map(|k| {
            let r: Vec<f64> = (0..n).map(|i| rmsfe(&table.error_series(k, i))).collect();
            let m: Vec<f64> = (0..n).map(|i| mafe(&table.error_series(k, i))).collect();
            ModelLoss {
                model_id: table.model_ids[k].clone(),
                avg_rmsfe: mean(&r),
                avg_mafe: mean(&m),
                rmsfe: r,
                mafe: m,
            }
        })
        .collect();

    let networks: Vec<usize> = (0..n_models).filter(|&k| k != bench).collect();
    let pick = |worst: bool| {
        networks
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let (x, y) = (losses[a].avg_rmsfe, losses[b].avg_rmsfe);
                let ord = if worst {
                    y.total_cmp(&x)
                } else {
                    x.total_cmp(&y)
                };
                ord.then_with(|| table.model_ids[a].cmp(&table.model_ids[b]))
            })
            .map(|k| table.model_ids[k].clone())
    };

    let mut dm = Vec::new();
    for &k in &networks {
        for i in 0..n {
            let eb = table.error_series(bench, i);
            let en = table.error_series(k, i);
            for loss in [LossKind::Squared, LossKind::Absolute] {
                let row = match dm_test(&eb, &en, loss) {
                    Ok(r) => DmRow {
                        model_id: table.model_ids[k].clone(),
                        ticker: table.tickers[i].clone(),
                        loss,
                        statistic: Some(r.statistic),
                        p_value: r.p_value,
                        mean_diff: r.mean_diff,
                    },
                    Err(NetArchError::ZeroVariance { mean_diff }) => DmRow {
                        model_id: table.model_ids[k].clone(),
                        ticker: table.tickers[i].clone(),
                        loss,
                        statistic: None,
                        p_value: 1.0,
                        mean_diff,
                    },
                    Err(e) => return Err(e),
                };
                dm.push(row);
            }
        }
    }

    let run_mcs = |loss: LossKind| {
        let series: Vec<Vec<f64>> = (0..n_models)
            .map(|k| average_loss_series(table, k, loss).values)
            .collect();
        mcs(&series, &table.model_ids, &config.mcs)
    };
    let mcs_squared = run_mcs(LossKind::Squared)?;
    let mcs_absolute = run_mcs(LossKind::Absolute)?;

    let members: Vec<usize> = match &config.ensemble_models {
        None => (0..n_models).collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                table
                    .model_index(id)
                    .ok_or_else(|| NetArchError::invalid(format!("unknown ensemble model {id}")))
            })
            .collect::<Result<_>>()?,
    };
    if members.is_empty() {
        return Err(NetArchError::invalid("ensemble needs at least one model"));
    }
    let member_ids: Vec<String> = members
        .iter()
        .map(|&k| table.model_ids[k].clone())
        .collect();
    let mut ensembles = Vec::new();
    for method in EnsembleMethod::ALL {
        let mut r = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut final_weights = Vec::with_capacity(n);
        for i in 0..n {
            let realized: Vec<f64> = table.realized.row(i).iter().copied().collect();
            let f: Vec<Vec<f64>> = members
                .iter()
                .map(|&k| table.forecasts[k].row(i).iter().copied().collect())
                .collect();
            let (combined, w) =
                rolling_combination(&realized, &f, method, config.ensemble_burn_in)?;
            let e: Vec<f64> = combined.iter().zip(&realized).map(|(a, b)| a - b).collect();
            r.push(rmsfe(&e));
            m.push(mafe(&e));
            final_weights.push(EnsembleWeights {
                method,
                model_ids: member_ids.clone(),
                weights: w,
            });
        }
        ensembles.push(EnsembleSummary {
            method,
            avg_rmsfe: mean(&r),
            avg_mafe: mean(&m),
            rmsfe: r,
            mafe: m,
            final_weights,
        });
    }

    let best_network = pick(false);
    let worst_network = pick(true);
    Ok(EvalReport {
        config: config.clone(),
        tickers: table.tickers.clone(),
        n_forecasts: horizon,
        forecast_meta: table.meta.clone(),
        losses,
        best_network,
        worst_network,
        dm,
        mcs_squared,
        mcs_absolute,
        ensembles,
        inputs: BTreeMap::new(),
    })
}
