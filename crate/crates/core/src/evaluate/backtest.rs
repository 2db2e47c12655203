use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{floored_log_square, log_squared, ZeroMode};
use crate::domain::{
    EdgeWeightMatrix, ForecastConstant, ForecastMeta, ForecastTable, Normalization, ReturnPanel,
};
use crate::error::{NetArchError, Result};
use crate::network::{
    dist_correlation, dist_euclidean, dist_logarch, weights_inverse_distance, weights_knn,
    DistanceKind, DistanceMatrix, InfoCriterion,
};
use crate::network_arch::{
    fit_network_with, forecast_network_one_step_with, NetworkEstimator, RhoSpec,
    DEFAULT_INSTRUMENT_DEPTH,
};
use crate::par::map_indices;
use crate::univariate::{fit_logarch, forecast_one_step};

pub const BENCHMARK_ID: &str = "logarch";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    InverseDistance,
    Knn(usize),
}

/// A forecasting model: the univariate benchmark or a network model with a
/// given distance and weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelSpec {
    Benchmark,
    Network {
        distance: DistanceKind,
        weighting: Weighting,
    },
}

impl ModelSpec {
    /// The benchmark plus the twelve network configurations: inverse
    /// distance (`A.m`) and k-nearest neighbours with k in {3, 5, 10}
    /// (`B.k.m`), for m = 1 (Euclidean), 2 (correlation), 3 (log-ARCH AR).
    pub fn all13() -> Vec<ModelSpec> {
        let mut out = vec![ModelSpec::Benchmark];
        for m in 1..=3 {
            out.push(ModelSpec::Network {
                distance: DistanceKind::from_model_index(m).unwrap(),
                weighting: Weighting::InverseDistance,
            });
        }
        for m in 1..=3 {
            for k in [3, 5, 10] {
                out.push(ModelSpec::Network {
                    distance: DistanceKind::from_model_index(m).unwrap(),
                    weighting: Weighting::Knn(k),
                });
            }
        }
        out
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn is_benchmark(&self) -> bool {
        matches!(self, ModelSpec::Benchmark)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Benchmark => f.write_str(BENCHMARK_ID),
            ModelSpec::Network {
                distance,
                weighting: Weighting::InverseDistance,
            } => write!(f, "A.{}", distance.model_index()),
            ModelSpec::Network {
                distance,
                weighting: Weighting::Knn(k),
            } => write!(f, "B.{k}.{}", distance.model_index()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = NetArchError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || NetArchError::invalid(format!("unknown model id {s:?}"));
        if s == BENCHMARK_ID {
            return Ok(ModelSpec::Benchmark);
        }
        let parts: Vec<&str> = s.split('.').collect();
        let dist = |p: &str| {
            p.parse::<usize>()
                .ok()
                .and_then(DistanceKind::from_model_index)
                .ok_or_else(bad)
        };
        match parts.as_slice() {
            ["A", m] => Ok(ModelSpec::Network {
                distance: dist(m)?,
                weighting: Weighting::InverseDistance,
            }),
            ["B", k, m] => {
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(ModelSpec::Network {
                    distance: dist(m)?,
                    weighting: Weighting::Knn(k),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = NetArchError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Estimation window length M.
    pub window_len: usize,
    pub models: Vec<ModelSpec>,
    /// Rebuild W on every rolling window instead of the first one only.
    pub refit_w_each_step: bool,
    pub zero_mode: ZeroMode,
    /// Row-normalize inverse-distance weights.
    pub normalize_inverse_distance: bool,
    pub instrument_depth: usize,
    pub ar_max_order: usize,
    pub ar_criterion: InfoCriterion,
    /// Constant of the network forecasts. The default, the residual mean,
    /// forecasts the log-squared return that serves as the realized proxy;
    /// `Smearing` forecasts the log variance like the benchmark does.
    pub network_constant: ForecastConstant,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window_len: 2540,
            models: ModelSpec::all13(),
            refit_w_each_step: false,
            zero_mode: ZeroMode::FloorMinNonzero,
            normalize_inverse_distance: true,
            instrument_depth: DEFAULT_INSTRUMENT_DEPTH,
            ar_max_order: 5,
            ar_criterion: InfoCriterion::Bic,
            network_constant: ForecastConstant::ResidualMean,
        }
    }
}

pub const MIN_WINDOW: usize = 100;

impl BacktestConfig {
    pub fn validate(&self, n_dates: usize) -> Result<()> {
        if self.window_len < MIN_WINDOW {
            return Err(NetArchError::invalid(format!(
                "window length {} is below {MIN_WINDOW}",
                self.window_len
            )));
        }
        if self.window_len >= n_dates {
            return Err(NetArchError::invalid(format!(
                "window length {} leaves no out-of-sample dates in a panel of {n_dates}",
                self.window_len
            )));
        }
        if self.models.is_empty() {
            return Err(NetArchError::invalid("no models to backtest"));
        }
        Ok(())
    }
}

/// Builds the edge weights of every network model in `models` from one
/// estimation window.
pub(crate) fn build_weights(
    window: &ReturnPanel,
    models: &[ModelSpec],
    config: &BacktestConfig,
) -> Result<HashMap<ModelSpec, EdgeWeightMatrix>> {
    let mut distances: HashMap<DistanceKind, DistanceMatrix> = HashMap::new();
    let mut out = HashMap::new();
    for model in models {
        let ModelSpec::Network {
            distance,
            weighting,
        } = *model
        else {
            continue;
        };
        if let Entry::Vacant(slot) = distances.entry(distance) {
            let d = match distance {
                DistanceKind::Euclidean => dist_euclidean(window),
                DistanceKind::Correlation => dist_correlation(window)?,
                DistanceKind::LogarchAr => dist_logarch(
                    &log_squared(window, config.zero_mode)?,
                    config.ar_max_order,
                    config.ar_criterion,
                )?,
            };
            slot.insert(d);
        }
        let d = &distances[&distance];
        let w = match weighting {
            Weighting::InverseDistance => {
                weights_inverse_distance(d, config.normalize_inverse_distance)?
            }
            Weighting::Knn(k) => weights_knn(d, k)?,
        };
        out.insert(*model, w);
    }
    Ok(out)
}

struct StepOutput {
    forecasts: Vec<Vec<f64>>,
    realized: Vec<f64>,
    floored: usize,
}

fn annotate(model: &ModelSpec, step: usize) -> impl Fn(NetArchError) -> NetArchError + '_ {
    move |e| NetArchError::Fit {
        model: model.id(),
        step,
        source: Box::new(e),
    }
}

fn run_step(
    panel: &ReturnPanel,
    config: &BacktestConfig,
    fixed_weights: Option<&HashMap<ModelSpec, EdgeWeightMatrix>>,
    step: usize,
) -> Result<StepOutput> {
    let m = config.window_len;
    let n = panel.n_stocks();
    let window = panel.window(step, m)?;
    let lv = log_squared(&window, config.zero_mode)?;
    let target = step + m;
    let realized: Vec<f64> = (0..n)
        .map(|i| floored_log_square(panel.returns()[(i, target)], lv.zero_policy.floors[i]))
        .collect();

    let refit;
    let weights = match fixed_weights {
        Some(w) => w,
        None => {
            refit = build_weights(&window, &config.models, config)?;
            &refit
        }
    };

    let last: Vec<f64> = lv.values.column(m - 1).iter().copied().collect();
    let estimator = NetworkEstimator {
        instrument_depth: config.instrument_depth,
        rho: RhoSpec::Estimate,
    };
    let mut forecasts = Vec::with_capacity(config.models.len());
    for model in &config.models {
        let f = match model {
            ModelSpec::Benchmark => (0..n)
                .map(|i| {
                    let row = lv.row(i);
                    let fit = fit_logarch(&row, 1)?;
                    forecast_one_step(&fit, &row)
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(annotate(model, step))?,
            ModelSpec::Network { .. } => {
                let w = &weights[model];
                let fit = fit_network_with(&lv.values, w, &estimator, &model.id())
                    .map_err(annotate(model, step))?;
                forecast_network_one_step_with(&fit, w, &last, config.network_constant)
                    .map_err(annotate(model, step))?
            }
        };
        forecasts.push(f);
    }
    Ok(StepOutput {
        forecasts,
        realized,
        floored: lv.zero_policy.total_applied(),
    })
}

/// Rolling-window one-step-ahead backtest. Step `j` fits every model on
/// dates `j..j+M` and forecasts date `j+M`; all models share the window.
pub fn run_backtest(panel: &ReturnPanel, config: &BacktestConfig) -> Result<ForecastTable> {
    config.validate(panel.n_dates())?;
    let m = config.window_len;
    let horizon = panel.n_dates() - m;
    let fixed = if config.refit_w_each_step {
        None
    } else {
        Some(build_weights(&panel.window(0, m)?, &config.models, config)?)
    };

    let steps: Vec<StepOutput> =
        map_indices(horizon, |j| run_step(panel, config, fixed.as_ref(), j))
            .into_iter()
            .collect::<Result<_>>()?;

    let n = panel.n_stocks();
    let mut forecasts = vec![DMatrix::zeros(n, horizon); config.models.len()];
    let mut realized = DMatrix::zeros(n, horizon);
    let mut floored = 0;
    for (j, s) in steps.iter().enumerate() {
        for (k, f) in s.forecasts.iter().enumerate() {
            for i in 0..n {
                forecasts[k][(i, j)] = f[i];
            }
        }
        for i in 0..n {
            realized[(i, j)] = s.realized[i];
        }
        floored += s.floored;
    }
    Ok(ForecastTable {
        model_ids: config.models.iter().map(ModelSpec::id).collect(),
        tickers: panel.tickers().to_vec(),
        dates: panel.dates()[m..].to_vec(),
        forecasts,
        realized,
        meta: Some(ForecastMeta {
            window_len: m,
            zero_policy: config.zero_mode.describe(),
            floored_entries: floored,
            w_normalization: if config.normalize_inverse_distance {
                Normalization::RowNormalized
            } else {
                Normalization::Raw
            },
            refit_w_each_step: config.refit_w_each_step,
            instrument_depth: config.instrument_depth,
            network_constant: config.network_constant,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_ids_roundtrip() {
        let all = ModelSpec::all13();
        let ids: Vec<String> = all.iter().map(ModelSpec::id).collect();
        assert_eq!(
            ids,
            vec![
                "logarch", "A.1", "A.2", "A.3", "B.3.1", "B.5.1", "B.10.1", "B.3.2", "B.5.2",
                "B.10.2", "B.3.3", "B.5.3", "B.10.3"
            ]
        );
        for (id, m) in ids.iter().zip(&all) {
            assert_eq!(id.parse::<ModelSpec>().unwrap(), *m);
        }
        assert!("B.0.1".parse::<ModelSpec>().is_err());
        assert!("A.4".parse::<ModelSpec>().is_err());
        assert!("garch".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn config_bounds() {
        let mut c = BacktestConfig::default();
        c.window_len = 200;
        assert!(c.validate(200).is_err());
        assert!(c.validate(201).is_ok());
        c.window_len = 50;
        assert!(c.validate(1000).is_err());
    }
}
