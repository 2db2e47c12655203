//! Shared domain types and their validation.
//!
//! Matrices are stored as dense `nalgebra` matrices with stocks along rows
//! and time along columns. JSON encodes every matrix row-major as an array of
//! row arrays.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ZeroPolicy;
use crate::error::{NetArchError, Result};

pub(crate) mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

pub(crate) mod matrix_vec_serde {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let all: Vec<Vec<Vec<f64>>> = ms
            .iter()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect();
        all.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let all: Vec<Vec<Vec<f64>>> = Vec::deserialize(d)?;
        all.iter()
            .map(|rows| super::matrix_serde::from_rows(rows).map_err(D::Error::custom))
            .collect()
    }
}

fn check_dates(dates: &[String]) -> Result<()> {
    if let Some(first) = dates.first() {
        // fixed-width ISO-8601 labels order correctly as strings
        if dates.iter().any(|d| d.len() != first.len()) {
            return Err(NetArchError::NonMonotoneDates(
                "date labels have different widths".into(),
            ));
        }
    }
    for pair in dates.windows(2) {
        if pair[0] >= pair[1] {
            return Err(NetArchError::NonMonotoneDates(format!(
                "{} is not before {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

fn check_unique_tickers(tickers: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(NetArchError::invalid(format!("duplicate ticker {t}")));
        }
    }
    Ok(())
}

/// Daily log returns of `n` stocks over `T` dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReturnPanelRepr", into = "ReturnPanelRepr")]
pub struct ReturnPanel {
    tickers: Vec<String>,
    dates: Vec<String>,
    returns: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ReturnPanelRepr {
    tickers: Vec<String>,
    dates: Vec<String>,
    #[serde(with = "matrix_serde")]
    returns: DMatrix<f64>,
}

impl TryFrom<ReturnPanelRepr> for ReturnPanel {
    type Error = NetArchError;
    fn try_from(r: ReturnPanelRepr) -> Result<Self> {
        ReturnPanel::new(r.tickers, r.dates, r.returns)
    }
}

impl From<ReturnPanel> for ReturnPanelRepr {
    fn from(p: ReturnPanel) -> Self {
        ReturnPanelRepr {
            tickers: p.tickers,
            dates: p.dates,
            returns: p.returns,
        }
    }
}

impl ReturnPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != tickers.len() || returns.ncols() != dates.len() {
            return Err(NetArchError::invalid(format!(
                "returns are {}x{} but there are {} tickers and {} dates",
                returns.nrows(),
                returns.ncols(),
                tickers.len(),
                dates.len()
            )));
        }
        if tickers.is_empty() {
            return Err(NetArchError::EmptyPanel { found: 0 });
        }
        if dates.len() < 2 {
            return Err(NetArchError::invalid("a panel needs at least 2 dates"));
        }
        check_unique_tickers(&tickers)?;
        check_dates(&dates)?;
        if let Some(pos) = returns.iter().position(|v| !v.is_finite()) {
            let (i, t) = (pos % returns.nrows(), pos / returns.nrows());
            return Err(NetArchError::invalid(format!(
                "non-finite return for {} on {}",
                tickers[i], dates[t]
            )));
        }
        Ok(Self {
            tickers,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.returns.row(i).iter().copied().collect()
    }

    /// Sub-panel of `len` consecutive dates starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<ReturnPanel> {
        if start + len > self.n_dates() {
            return Err(NetArchError::invalid("window exceeds panel length"));
        }
        ReturnPanel::new(
            self.tickers.clone(),
            self.dates[start..start + len].to_vec(),
            self.returns.columns(start, len).into_owned(),
        )
    }

    /// Sub-panel restricted to the given stock indices, in that order.
    pub fn select_stocks(&self, idx: &[usize]) -> Result<ReturnPanel> {
        let tickers = idx.iter().map(|&i| self.tickers[i].clone()).collect();
        let returns = DMatrix::from_fn(idx.len(), self.n_dates(), |r, t| self.returns[(idx[r], t)]);
        ReturnPanel::new(tickers, self.dates.clone(), returns)
    }

    /// The panel as a ticker-to-date map of returns, for re-validation.
    pub fn to_raw(&self) -> Vec<(String, BTreeMap<String, f64>)> {
        self.tickers
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let series = self
                    .dates
                    .iter()
                    .enumerate()
                    .map(|(j, d)| (d.clone(), self.returns[(i, j)]))
                    .collect();
                (t.clone(), series)
            })
            .collect()
    }
}

/// What the raw values in a ticker map measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Price,
    Return,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedPanel {
    pub panel: ReturnPanel,
    /// Tickers removed because they miss at least one calendar date.
    pub dropped: Vec<String>,
}

/// Builds a panel from per-ticker series, dropping every stock that misses
/// a date of the common calendar (the union of all dates) or has a
/// non-finite value. Prices are turned into log differences.
pub fn validate_panel(
    raw: &[(String, BTreeMap<String, f64>)],
    field: Field,
) -> Result<ValidatedPanel> {
    let mut seen = HashSet::new();
    for (t, _) in raw {
        if !seen.insert(t.as_str()) {
            return Err(NetArchError::DuplicateKey {
                date: "*".into(),
                ticker: t.clone(),
            });
        }
    }
    if raw.len() < 2 {
        return Err(NetArchError::EmptyPanel { found: raw.len() });
    }
    let calendar: Vec<String> = raw
        .iter()
        .flat_map(|(_, s)| s.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    check_dates(&calendar)?;

    let min_dates = match field {
        Field::Price => 3,
        Field::Return => 2,
    };
    if calendar.len() < min_dates {
        return Err(NetArchError::invalid(format!(
            "need at least {min_dates} common dates, found {}",
            calendar.len()
        )));
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (ticker, series) in raw {
        let complete = series.len() == calendar.len()
            && series.values().all(|v| v.is_finite())
            && (field == Field::Return || series.values().all(|v| *v > 0.0));
        if complete {
            kept.push((ticker, series));
        } else {
            dropped.push(ticker.clone());
        }
    }
    if kept.len() < 2 {
        return Err(NetArchError::EmptyPanel { found: kept.len() });
    }

    let (dates, returns) = match field {
        Field::Return => {
            let m = DMatrix::from_fn(kept.len(), calendar.len(), |i, t| kept[i].1[&calendar[t]]);
            (calendar, m)
        }
        Field::Price => {
            let m = DMatrix::from_fn(kept.len(), calendar.len() - 1, |i, t| {
                let s = kept[i].1;
                (s[&calendar[t + 1]] / s[&calendar[t]]).ln()
            });
            (calendar[1..].to_vec(), m)
        }
    };
    let tickers = kept.iter().map(|(t, _)| (*t).clone()).collect();
    Ok(ValidatedPanel {
        panel: ReturnPanel::new(tickers, dates, returns)?,
        dropped,
    })
}

/// Log-squared returns `ln max(y^2, floor)` with the flooring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVolPanel {
    pub tickers: Vec<String>,
    #[serde(with = "matrix_serde")]
    pub values: DMatrix<f64>,
    pub zero_policy: ZeroPolicy,
}

impl LogVolPanel {
    pub fn n_stocks(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dates(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum WeightKind {
    InverseDistance,
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    RowNormalized,
    Raw,
}

/// Edge weights `W` of the network: nonnegative, zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EdgeWeightRepr", into = "EdgeWeightRepr")]
pub struct EdgeWeightMatrix {
    weights: DMatrix<f64>,
    kind: WeightKind,
    normalization: Normalization,
}

#[derive(Serialize, Deserialize)]
struct EdgeWeightRepr {
    #[serde(with = "matrix_serde")]
    weights: DMatrix<f64>,
    kind: WeightKind,
    normalization: Normalization,
}

impl TryFrom<EdgeWeightRepr> for EdgeWeightMatrix {
    type Error = NetArchError;
    fn try_from(r: EdgeWeightRepr) -> Result<Self> {
        EdgeWeightMatrix::new(r.weights, r.kind, r.normalization)
    }
}

impl From<EdgeWeightMatrix> for EdgeWeightRepr {
    fn from(w: EdgeWeightMatrix) -> Self {
        EdgeWeightRepr {
            weights: w.weights,
            kind: w.kind,
            normalization: w.normalization,
        }
    }
}

const ROW_SUM_TOL: f64 = 1e-12;

impl EdgeWeightMatrix {
    pub fn new(
        weights: DMatrix<f64>,
        kind: WeightKind,
        normalization: Normalization,
    ) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(NetArchError::invalid("edge weight matrix must be square"));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(NetArchError::invalid(format!(
                    "self-loop weight at node {i}"
                )));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(NetArchError::invalid(
                "edge weights must be finite and nonnegative",
            ));
        }
        if let WeightKind::Knn { k } = kind {
            let target = 1.0 / k as f64;
            for (i, row) in weights.row_iter().enumerate() {
                let nz: Vec<f64> = row.iter().copied().filter(|w| *w != 0.0).collect();
                if nz.len() != k || nz.iter().any(|w| *w != target) {
                    return Err(NetArchError::invalid(format!(
                        "row {i} is not a {k}-nearest-neighbour row"
                    )));
                }
            }
        }
        if normalization == Normalization::RowNormalized {
            for (i, row) in weights.row_iter().enumerate() {
                let s: f64 = row.iter().sum();
                if s != 0.0 && (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(NetArchError::invalid(format!("row {i} sums to {s}, not 1")));
                }
            }
        }
        Ok(Self {
            weights,
            kind,
            normalization,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_row_normalized(&self) -> bool {
        self.normalization == Normalization::RowNormalized
    }
}

/// Univariate log-ARCH(P) estimates from the ARMA representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFit {
    pub phi0: f64,
    pub gamma: Vec<f64>,
    pub mu_star: f64,
    pub omega: f64,
    pub order: usize,
    pub residuals: Vec<f64>,
}

impl UnivariateFit {
    /// Constant of the one-step log-variance forecast, `phi0 - mu_star`.
    pub fn forecast_constant(&self) -> f64 {
        self.omega
    }
}

/// Network log-ARCH(1) estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFit {
    pub rho: f64,
    pub gamma_diag: Vec<f64>,
    pub phi0: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// Centered residuals of the untransformed equation, n x (T-1).
    #[serde(with = "matrix_serde")]
    pub residual_panel: DMatrix<f64>,
    pub w_ref: String,
    /// Number of network lags used as instruments (0 when rho was fixed).
    pub instrument_depth: usize,
    pub rho_fixed: bool,
    /// Plug-in standard errors, `rho` first then the diagonal of Gamma.
    /// The `rho` entry is zero when `rho` was fixed.
    pub std_errors: Vec<f64>,
    /// Second-step GMM criterion at the estimate.
    pub objective: f64,
}

/// Constant used in the network forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastConstant {
    /// `phi0_i - mu_star_i`: the smearing correction turns the forecast into
    /// one of the log conditional variance, as in the univariate model.
    #[default]
    Smearing,
    /// `phi0_i` alone: the forecast targets the conditional mean of the
    /// log-squared return.
    ResidualMean,
}

impl NetworkFit {
    /// Per-stock forecast constants `phi0_i - mu_star_i`.
    pub fn forecast_constants(&self) -> Vec<f64> {
        self.forecast_constants_with(ForecastConstant::Smearing)
    }

    pub fn forecast_constants_with(&self, kind: ForecastConstant) -> Vec<f64> {
        match kind {
            ForecastConstant::Smearing => self
                .phi0
                .iter()
                .zip(&self.mu_star)
                .map(|(p, m)| p - m)
                .collect(),
            ForecastConstant::ResidualMean => self.phi0.clone(),
        }
    }
}

/// Run-level settings recorded next to forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMeta {
    pub window_len: usize,
    pub zero_policy: String,
    /// Total number of floored log-squared entries over all windows.
    pub floored_entries: usize,
    pub w_normalization: Normalization,
    pub refit_w_each_step: bool,
    pub instrument_depth: usize,
    #[serde(default)]
    pub network_constant: ForecastConstant,
}

/// One-step-ahead log-variance forecasts and realized log-squared returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    pub model_ids: Vec<String>,
    pub tickers: Vec<String>,
    /// Out-of-sample dates.
    pub dates: Vec<String>,
    /// One n x H matrix per model.
    #[serde(with = "matrix_vec_serde")]
    pub forecasts: Vec<DMatrix<f64>>,
    #[serde(with = "matrix_serde")]
    pub realized: DMatrix<f64>,
    pub meta: Option<ForecastMeta>,
}

impl ForecastTable {
    pub fn model_index(&self, model: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == model)
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn horizon(&self) -> usize {
        self.dates.len()
    }

    /// Forecast errors `forecast - realized` for one model.
    pub fn errors(&self, model: usize) -> DMatrix<f64> {
        &self.forecasts[model] - &self.realized
    }

    pub fn error_series(&self, model: usize, stock: usize) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| self.forecasts[model][(stock, t)] - self.realized[(stock, t)])
            .collect()
    }

    /// Long CSV with columns `model_id,ticker,date,forecast,realized`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["model_id", "ticker", "date", "forecast", "realized"])
            .map_err(csv_io)?;
        for (m, id) in self.model_ids.iter().enumerate() {
            for (i, ticker) in self.tickers.iter().enumerate() {
                for (t, date) in self.dates.iter().enumerate() {
                    wr.write_record([
                        id.as_str(),
                        ticker.as_str(),
                        date.as_str(),
                        &self.forecasts[m][(i, t)].to_string(),
                        &self.realized[(i, t)].to_string(),
                    ])
                    .map_err(csv_io)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the long CSV layout written by [`ForecastTable::write_csv`].
    /// Model, ticker and date orders follow first appearance.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<ForecastTable> {
        let mut rd = csv::Reader::from_reader(r);
        let mut models: Vec<String> = Vec::new();
        let mut tickers: Vec<String> = Vec::new();
        let mut dates: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize, usize), (f64, f64)> = BTreeMap::new();
        fn index_of(v: &mut Vec<String>, s: &str) -> usize {
            match v.iter().position(|x| x == s) {
                Some(i) => i,
                None => {
                    v.push(s.to_string());
                    v.len() - 1
                }
            }
        }
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| NetArchError::Parse {
                row: row + 2,
                column: "*".into(),
                message: e.to_string(),
            })?;
            if rec.len() != 5 {
                return Err(NetArchError::Parse {
                    row: row + 2,
                    column: "*".into(),
                    message: format!("expected 5 fields, found {}", rec.len()),
                });
            }
            let num = |c: usize, name: &str| -> Result<f64> {
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| NetArchError::Parse {
                        row: row + 2,
                        column: name.into(),
                        message: e.to_string(),
                    })
            };
            let f = num(3, "forecast")?;
            let y = num(4, "realized")?;
            let key = (
                index_of(&mut models, &rec[0]),
                index_of(&mut tickers, &rec[1]),
                index_of(&mut dates, &rec[2]),
            );
            if cells.insert(key, (f, y)).is_some() {
                return Err(NetArchError::DuplicateKey {
                    date: rec[2].to_string(),
                    ticker: format!("{}/{}", &rec[0], &rec[1]),
                });
            }
        }
        let (m, n, h) = (models.len(), tickers.len(), dates.len());
        if m == 0 || cells.len() != m * n * h {
            return Err(NetArchError::invalid(
                "forecast table is empty or incomplete",
            ));
        }
        let mut forecasts = vec![DMatrix::zeros(n, h); m];
        let mut realized = DMatrix::from_element(n, h, f64::NAN);
        for (&(mi, i, t), &(f, y)) in &cells {
            forecasts[mi][(i, t)] = f;
            if realized[(i, t)].is_nan() {
                realized[(i, t)] = y;
            } else if realized[(i, t)] != y {
                return Err(NetArchError::invalid(format!(
                    "realized value differs across models for {} on {}",
                    tickers[i], dates[t]
                )));
            }
        }
        Ok(ForecastTable {
            model_ids: models,
            tickers,
            dates,
            forecasts,
            realized,
            meta: None,
        })
    }
}

pub(crate) fn csv_io(e: csv::Error) -> NetArchError {
    NetArchError::Io(std::io::Error::other(e.to_string()))
}
