//! Rolling-window backtests and forecast evaluation.

mod backtest;
mod dm;
mod mcs;
mod metrics;
mod report;

pub use backtest::{run_backtest, BacktestConfig, ModelSpec, Weighting};
pub use dm::{dm_test, hac_lag, DmResult, LossKind};
pub use mcs::{mcs, McsConfig, McsModel, McsResult};
pub use metrics::{average_loss_series, mafe, rmsfe, LossSeries};
pub use report::{build_report, DmRow, EnsembleSummary, EvalReport, ModelLoss, ReportConfig};
