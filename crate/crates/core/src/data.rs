//! CSV ingestion and the log-squared transform.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{csv_io, validate_panel, Field, LogVolPanel, ReturnPanel, ValidatedPanel};
use crate::error::{NetArchError, Result};

/// Magnitudes below this are treated as exact zeros.
pub const ZERO_RETURN_EPS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// First column is the date, one column per ticker.
    Wide,
    /// Columns `date,ticker,value`.
    Long,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMode {
    /// Floor at the smallest nonzero squared return of each stock.
    #[default]
    FloorMinNonzero,
    /// Floor every squared return at a fixed positive constant.
    FloorConstant(f64),
}

impl ZeroMode {
    pub fn describe(&self) -> String {
        match self {
            ZeroMode::FloorMinNonzero => "floor_min_nonzero".into(),
            ZeroMode::FloorConstant(c) => format!("floor_constant({c})"),
        }
    }
}

/// Record of how zero returns were floored in a [`LogVolPanel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPolicy {
    pub mode: ZeroMode,
    /// Floor applied to the squared returns of each stock.
    pub floors: Vec<f64>,
    /// Number of floored entries per ticker.
    pub applied_counts: BTreeMap<String, usize>,
}

impl ZeroPolicy {
    pub fn total_applied(&self) -> usize {
        self.applied_counts.values().sum()
    }
}

fn squared(y: f64) -> f64 {
    if y.abs() < ZERO_RETURN_EPS {
        0.0
    } else {
        y * y
    }
}

/// Per-stock floors for the squared returns of `panel` under `mode`.
pub fn squared_floors(panel: &ReturnPanel, mode: ZeroMode) -> Result<Vec<f64>> {
    match mode {
        ZeroMode::FloorConstant(c) => {
            if !(c > 0.0) || !c.is_finite() {
                return Err(NetArchError::invalid("floor constant must be positive"));
            }
            Ok(vec![c; panel.n_stocks()])
        }
        ZeroMode::FloorMinNonzero => (0..panel.n_stocks())
            .map(|i| {
                panel
                    .returns()
                    .row(i)
                    .iter()
                    .map(|&y| squared(y))
                    .filter(|&s| s > 0.0)
                    .min_by(f64::total_cmp)
                    .ok_or_else(|| NetArchError::AllZeroSeries {
                        ticker: panel.tickers()[i].clone(),
                    })
            })
            .collect(),
    }
}

/// `ln max(y^2, floor)` for a single return.
pub fn floored_log_square(y: f64, floor: f64) -> f64 {
    squared(y).max(floor).ln()
}

/// Log-squared transform of a panel; floors are computed from this panel
/// only, so pass the estimation window to avoid lookahead.
pub fn log_squared(panel: &ReturnPanel, mode: ZeroMode) -> Result<LogVolPanel> {
    let floors = squared_floors(panel, mode)?;
    let r = panel.returns();
    let mut counts = BTreeMap::new();
    let values = DMatrix::from_fn(r.nrows(), r.ncols(), |i, t| {
        floored_log_square(r[(i, t)], floors[i])
    });
    for (i, ticker) in panel.tickers().iter().enumerate() {
        let c = r.row(i).iter().filter(|&&y| squared(y) < floors[i]).count();
        counts.insert(ticker.clone(), c);
    }
    Ok(LogVolPanel {
        tickers: panel.tickers().to_vec(),
        values,
        zero_policy: ZeroPolicy {
            mode,
            floors,
            applied_counts: counts,
        },
    })
}

fn parse_cell(s: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| NetArchError::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse {s:?} as a number"),
    })
}

/// Reads a panel from CSV text. Empty, `NA` and `NaN` cells count as
/// missing, so the stock is dropped by validation.
pub fn read_csv<R: Read>(reader: R, layout: Layout, field: Field) -> Result<ValidatedPanel> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| NetArchError::Parse {
            row: 1,
            column: "*".into(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut series: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut missing: std::collections::HashSet<String> = Default::default();

    match layout {
        Layout::Wide => {
            if header.len() < 2 {
                return Err(NetArchError::Parse {
                    row: 1,
                    column: "*".into(),
                    message: "wide layout needs a date column and at least one ticker".into(),
                });
            }
            for t in &header[1..] {
                if index.insert(t.clone(), series.len()).is_some() {
                    return Err(NetArchError::DuplicateKey {
                        date: "*".into(),
                        ticker: t.clone(),
                    });
                }
                series.push((t.clone(), BTreeMap::new()));
            }
            let mut seen_dates = std::collections::HashSet::new();
            for (r, rec) in rd.records().enumerate() {
                let row = r + 2;
                let rec = rec.map_err(|e| NetArchError::Parse {
                    row,
                    column: "*".into(),
                    message: e.to_string(),
                })?;
                let date = rec.get(0).unwrap_or("").trim().to_string();
                if !seen_dates.insert(date.clone()) {
                    return Err(NetArchError::DuplicateKey {
                        date,
                        ticker: "*".into(),
                    });
                }
                for (c, ticker) in header[1..].iter().enumerate() {
                    match parse_cell(rec.get(c + 1).unwrap_or(""), row, ticker)? {
                        Some(v) => {
                            series[c].1.insert(date.clone(), v);
                        }
                        None => {
                            missing.insert(ticker.clone());
                        }
                    }
                }
            }
        }
        Layout::Long => {
            if header.len() < 3 {
                return Err(NetArchError::Parse {
                    row: 1,
                    column: "*".into(),
                    message: "long layout needs columns date,ticker,value".into(),
                });
            }
            for (r, rec) in rd.records().enumerate() {
                let row = r + 2;
                let rec = rec.map_err(|e| NetArchError::Parse {
                    row,
                    column: "*".into(),
                    message: e.to_string(),
                })?;
                let date = rec.get(0).unwrap_or("").trim().to_string();
                let ticker = rec.get(1).unwrap_or("").trim().to_string();
                let idx = *index.entry(ticker.clone()).or_insert_with(|| {
                    series.push((ticker.clone(), BTreeMap::new()));
                    series.len() - 1
                });
                match parse_cell(rec.get(2).unwrap_or(""), row, &header[2])? {
                    Some(v) => {
                        if series[idx].1.insert(date.clone(), v).is_some() {
                            return Err(NetArchError::DuplicateKey { date, ticker });
                        }
                    }
                    None => {
                        missing.insert(ticker);
                    }
                }
            }
        }
    }
    // a stock with an empty cell is dropped even though it has every date key
    let (kept, incomplete): (Vec<_>, Vec<_>) =
        series.into_iter().partition(|(t, _)| !missing.contains(t));
    let mut validated = validate_panel(&kept, field)?;
    validated
        .dropped
        .extend(incomplete.into_iter().map(|(t, _)| t));
    Ok(validated)
}

pub fn load_csv(path: impl AsRef<Path>, layout: Layout, field: Field) -> Result<ValidatedPanel> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), layout, field)
}

/// Writes a return panel in the wide layout. Values use the shortest
/// representation that parses back to the same float.
pub fn write_csv<W: std::io::Write>(panel: &ReturnPanel, writer: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.tickers().iter().cloned());
    wr.write_record(&header).map_err(csv_io)?;
    for (t, date) in panel.dates().iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(panel.returns().column(t).iter().map(|v| v.to_string()));
        wr.write_record(&rec).map_err(csv_io)?;
    }
    wr.flush()?;
    Ok(())
}

/// Descriptive statistics of one stock's returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSummary {
    pub ticker: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(panel: &ReturnPanel) -> Vec<StockSummary> {
    let t = panel.n_dates() as f64;
    panel
        .tickers()
        .iter()
        .enumerate()
        .map(|(i, ticker)| {
            let row = panel.row(i);
            let mean = row.iter().sum::<f64>() / t;
            let var = row.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (t - 1.0);
            StockSummary {
                ticker: ticker.clone(),
                mean,
                sd: var.sqrt(),
                min: row.iter().copied().fold(f64::INFINITY, f64::min),
                max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}
