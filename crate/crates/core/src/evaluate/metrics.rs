use serde::{Deserialize, Serialize};

use crate::domain::ForecastTable;

use super::dm::LossKind;

pub fn rmsfe(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn mafe(errors: &[f64]) -> f64 {
    errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
}

/// Per-date loss of one model averaged across stocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub model_id: String,
    pub kind: LossKind,
    pub values: Vec<f64>,
}

pub fn average_loss_series(table: &ForecastTable, model: usize, kind: LossKind) -> LossSeries {
    let e = table.errors(model);
    let n = e.nrows() as f64;
    let values = e
        .column_iter()
        .map(|col| col.iter().map(|&x| kind.apply(x)).sum::<f64>() / n)
        .collect();
    LossSeries {
        model_id: table.model_ids[model].clone(),
        kind,
        values,
    }
}
