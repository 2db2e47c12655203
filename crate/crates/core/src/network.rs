//! Pairwise dissimilarities between stocks and the edge-weight matrices
//! built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{
    matrix_serde, EdgeWeightMatrix, LogVolPanel, Normalization, ReturnPanel, WeightKind,
};
use crate::error::{NetArchError, Result};
use crate::linalg::ols_with_intercept;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Euclidean,
    Correlation,
    LogarchAr,
}

impl DistanceKind {
    /// Position in the model naming scheme (`A.m`, `B.k.m`).
    pub fn model_index(self) -> usize {
        match self {
            DistanceKind::Euclidean => 1,
            DistanceKind::Correlation => 2,
            DistanceKind::LogarchAr => 3,
        }
    }

    pub fn from_model_index(m: usize) -> Option<Self> {
        match m {
            1 => Some(DistanceKind::Euclidean),
            2 => Some(DistanceKind::Correlation),
            3 => Some(DistanceKind::LogarchAr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoCriterion {
    Aic,
    Bic,
}

/// Symmetric dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub tickers: Vec<String>,
    #[serde(with = "matrix_serde")]
    pub d: DMatrix<f64>,
    pub kind: DistanceKind,
    /// Selected autoregressive order per ticker, for `LogarchAr` only.
    pub ar_orders: Option<BTreeMap<String, usize>>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// CSV dump with a header row of tickers and one labelled row per stock.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ticker");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, t) in self.tickers.iter().enumerate() {
            out.push_str(t);
            for j in 0..self.n() {
                let _ = write!(out, ",{}", self.d[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

fn symmetric_from(n: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = f(i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Euclidean distance between the return series of each pair of stocks.
pub fn dist_euclidean(panel: &ReturnPanel) -> DistanceMatrix {
    let r = panel.returns();
    let d = symmetric_from(panel.n_stocks(), |i, j| {
        r.row(i)
            .iter()
            .zip(r.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    DistanceMatrix {
        tickers: panel.tickers().to_vec(),
        d,
        kind: DistanceKind::Euclidean,
        ar_orders: None,
    }
}

/// `sqrt(2 (1 - rho_ij))` with `rho_ij` the Pearson correlation.
pub fn dist_correlation(panel: &ReturnPanel) -> Result<DistanceMatrix> {
    let n = panel.n_stocks();
    let t = panel.n_dates() as f64;
    let mut centered = Vec::with_capacity(n);
    for i in 0..n {
        let row = panel.row(i);
        let mean = row.iter().sum::<f64>() / t;
        let c: Vec<f64> = row.iter().map(|y| y - mean).collect();
        let ss: f64 = c.iter().map(|v| v * v).sum();
        if !(ss > 0.0) {
            return Err(NetArchError::DegenerateSeries {
                ticker: panel.tickers()[i].clone(),
            });
        }
        let norm = ss.sqrt();
        centered.push(c.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let d = symmetric_from(n, |i, j| {
        let rho: f64 = centered[i]
            .iter()
            .zip(&centered[j])
            .map(|(a, b)| a * b)
            .sum();
        let gap = 1.0 - rho.clamp(-1.0, 1.0);
        // perfectly correlated up to rounding
        if gap <= 1e-12 {
            0.0
        } else {
            (2.0 * gap).sqrt()
        }
    });
    Ok(DistanceMatrix {
        tickers: panel.tickers().to_vec(),
        d,
        kind: DistanceKind::Correlation,
        ar_orders: None,
    })
}

/// Autoregressive coefficients of one log-squared series with the order
/// chosen by an information criterion over `1..=max_order`. All orders are
/// compared on the common sample that drops the first `max_order` values.
pub fn select_ar(series: &[f64], max_order: usize, criterion: InfoCriterion) -> Option<Vec<f64>> {
    let n_eff = series.len() - max_order;
    let y = &series[max_order..];
    let nf = n_eff as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for p in 1..=max_order {
        let lags: Vec<Vec<f64>> = (1..=p)
            .map(|l| series[max_order - l..series.len() - l].to_vec())
            .collect();
        let fit = ols_with_intercept(y, &lags)?;
        let penalty = match criterion {
            InfoCriterion::Aic => 2.0,
            InfoCriterion::Bic => nf.ln(),
        };
        let ic = nf * (fit.rss / nf).ln() + penalty * (p + 1) as f64;
        if best.as_ref().is_none_or(|(b, _)| ic < *b) {
            best = Some((ic, fit.coefs));
        }
    }
    best.map(|(_, g)| g)
}

/// Euclidean distance between zero-padded AR coefficient vectors.
pub fn ar_coefficient_distance(a: &[f64], b: &[f64]) -> f64 {
    let p = a.len().max(b.len());
    (0..p)
        .map(|k| {
            let x = a.get(k).copied().unwrap_or(0.0);
            let y = b.get(k).copied().unwrap_or(0.0);
            (x - y) * (x - y)
        })
        .sum::<f64>()
        .sqrt()
}

/// Model-based distance between the autoregressions of the log-squared
/// series.
pub fn dist_logarch(
    volpanel: &LogVolPanel,
    max_order: usize,
    criterion: InfoCriterion,
) -> Result<DistanceMatrix> {
    let t = volpanel.n_dates();
    if max_order == 0 || t < max_order + 10 * max_order {
        return Err(NetArchError::invalid(format!(
            "{t} observations are too few for autoregressions up to order {max_order}"
        )));
    }
    let mut coefs = Vec::with_capacity(volpanel.n_stocks());
    let mut orders = BTreeMap::new();
    for (i, ticker) in volpanel.tickers.iter().enumerate() {
        let g = select_ar(&volpanel.row(i), max_order, criterion).ok_or_else(|| {
            NetArchError::SingularRegression {
                ticker: ticker.clone(),
            }
        })?;
        orders.insert(ticker.clone(), g.len());
        coefs.push(g);
    }
    let d = symmetric_from(coefs.len(), |i, j| {
        ar_coefficient_distance(&coefs[i], &coefs[j])
    });
    Ok(DistanceMatrix {
        tickers: volpanel.tickers.clone(),
        d,
        kind: DistanceKind::LogarchAr,
        ar_orders: Some(orders),
    })
}

/// `w_ij = 1 / d_ij` off the diagonal, optionally row-normalized.
pub fn weights_inverse_distance(d: &DistanceMatrix, normalize: bool) -> Result<EdgeWeightMatrix> {
    let n = d.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if !(d.d[(i, j)] > 0.0) {
                return Err(NetArchError::CoincidentSeries {
                    a: d.tickers[i].clone(),
                    b: d.tickers[j].clone(),
                });
            }
            w[(i, j)] = 1.0 / d.d[(i, j)];
        }
    }
    let normalization = if normalize {
        for i in 0..n {
            let s: f64 = w.row(i).iter().sum();
            if s > 0.0 {
                w.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
        }
        Normalization::RowNormalized
    } else {
        Normalization::Raw
    };
    EdgeWeightMatrix::new(w, WeightKind::InverseDistance, normalization)
}

/// Indices of the `k` nearest neighbours of node `i`, ties broken by the
/// lower ticker position.
pub fn nearest_neighbours(d: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..d.n()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| d.d[(i, a)].total_cmp(&d.d[(i, b)]).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// Constant weights `1/k` on each node's `k` nearest neighbours.
pub fn weights_knn(d: &DistanceMatrix, k: usize) -> Result<EdgeWeightMatrix> {
    let n = d.n();
    if k == 0 || k >= n {
        return Err(NetArchError::BadK {
            k,
            max: n.saturating_sub(1),
        });
    }
    let mut w = DMatrix::zeros(n, n);
    let v = 1.0 / k as f64;
    for i in 0..n {
        for j in nearest_neighbours(d, i, k) {
            w[(i, j)] = v;
        }
    }
    EdgeWeightMatrix::new(w, WeightKind::Knn { k }, Normalization::RowNormalized)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Directed weighted GraphML; an edge `i -> j` exists iff `w_ij != 0`.
pub fn export_graph(w: &EdgeWeightMatrix, tickers: &[String]) -> Result<String> {
    let n = w.n_nodes();
    if tickers.len() != n {
        return Err(NetArchError::invalid("ticker count does not match W"));
    }
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    out.push_str("  <graph id=\"W\" edgedefault=\"directed\">\n");
    for t in tickers {
        let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(t));
    }
    for i in 0..n {
        for j in 0..n {
            let v = w.weights()[(i, j)];
            if v != 0.0 {
                let _ = writeln!(
                    out,
                    "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>",
                    xml_escape(&tickers[i]),
                    xml_escape(&tickers[j]),
                    v
                );
            }
        }
    }
    out.push_str("  </graph>\n</graphml>\n");
    Ok(out)
}
