use std::path::Path;

use clap::ValueEnum;
use netarch::data::{Layout, ZeroMode};
use netarch::evaluate::{BacktestConfig, McsConfig, ModelSpec, ReportConfig};
use netarch::network::{DistanceKind, InfoCriterion};
use netarch::{Field, ForecastConstant, NetArchError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutArg {
    Wide,
    Long,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Wide => Layout::Wide,
            LayoutArg::Long => Layout::Long,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldArg {
    Price,
    Return,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Price => Field::Price,
            FieldArg::Return => Field::Return,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceArg {
    Euclidean,
    Correlation,
    Logarch,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Euclidean => DistanceKind::Euclidean,
            DistanceArg::Correlation => DistanceKind::Correlation,
            DistanceArg::Logarch => DistanceKind::LogarchAr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Invdist,
    Knn,
}

/// `min-nonzero` or a positive constant floor for squared returns.
pub fn parse_zero_policy(s: &str) -> Result<ZeroMode> {
    if s == "min-nonzero" {
        return Ok(ZeroMode::FloorMinNonzero);
    }
    match s.parse::<f64>() {
        Ok(c) if c > 0.0 && c.is_finite() => Ok(ZeroMode::FloorConstant(c)),
        _ => Err(NetArchError::Invalid(format!(
            "zero policy must be `min-nonzero` or a positive number, got {s:?}"
        ))),
    }
}

/// Every tunable, with the defaults used when neither a config file nor a
/// flag sets it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub layout: LayoutArg,
    pub field: FieldArg,
    pub distance: DistanceArg,
    pub weighting: WeightingArg,
    pub k: usize,
    pub row_normalize: bool,
    pub ar_max_order: usize,
    pub ar_criterion: InfoCriterion,
    pub window_len: usize,
    pub models: Vec<String>,
    pub refit_w: bool,
    pub zero_policy: String,
    pub instrument_depth: usize,
    pub alpha: f64,
    pub bootstrap_reps: usize,
    pub block_len: usize,
    pub seed: u64,
    pub ensemble_burn_in: usize,
    pub network_constant: ForecastConstant,
}

impl Default for Settings {
    fn default() -> Self {
        let bt = BacktestConfig::default();
        let mcs = McsConfig::default();
        let rep = ReportConfig::default();
        Self {
            layout: LayoutArg::Wide,
            field: FieldArg::Price,
            distance: DistanceArg::Euclidean,
            weighting: WeightingArg::Knn,
            k: 3,
            row_normalize: bt.normalize_inverse_distance,
            ar_max_order: bt.ar_max_order,
            ar_criterion: bt.ar_criterion,
            window_len: bt.window_len,
            models: bt.models.iter().map(ModelSpec::id).collect(),
            refit_w: bt.refit_w_each_step,
            zero_policy: "min-nonzero".into(),
            instrument_depth: bt.instrument_depth,
            alpha: mcs.alpha,
            bootstrap_reps: mcs.bootstrap_reps,
            block_len: mcs.block_len,
            seed: mcs.seed,
            ensemble_burn_in: rep.ensemble_burn_in,
            network_constant: bt.network_constant,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| NetArchError::Invalid(format!("config {}: {e}", p.display())))
            }
        }
    }

    pub fn zero_mode(&self) -> Result<ZeroMode> {
        parse_zero_policy(&self.zero_policy)
    }

    pub fn backtest(&self) -> Result<BacktestConfig> {
        Ok(BacktestConfig {
            window_len: self.window_len,
            models: self
                .models
                .iter()
                .map(|m| m.trim().parse())
                .collect::<Result<_>>()?,
            refit_w_each_step: self.refit_w,
            zero_mode: self.zero_mode()?,
            normalize_inverse_distance: self.row_normalize,
            instrument_depth: self.instrument_depth,
            ar_max_order: self.ar_max_order,
            ar_criterion: self.ar_criterion,
            network_constant: self.network_constant,
        })
    }

    pub fn report(&self) -> ReportConfig {
        ReportConfig {
            mcs: McsConfig {
                alpha: self.alpha,
                bootstrap_reps: self.bootstrap_reps,
                block_len: self.block_len,
                seed: self.seed,
            },
            ensemble_burn_in: self.ensemble_burn_in,
            ..ReportConfig::default()
        }
    }
}
