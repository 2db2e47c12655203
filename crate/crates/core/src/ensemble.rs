//! Forecast combinations: simple average, minimum-variance weights and
//! constrained least squares (weights summing to one).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NetArchError, Result};
use crate::linalg::spd_solve_vec;

/// Dates combined by simple averaging before estimated weights are used.
pub const DEFAULT_BURN_IN: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMethod {
    Simple,
    MinVar,
    Cols,
}

impl EnsembleMethod {
    pub const ALL: [EnsembleMethod; 3] = [Self::Simple, Self::MinVar, Self::Cols];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub method: EnsembleMethod,
    pub model_ids: Vec<String>,
    pub weights: Vec<f64>,
}

fn check_columns(forecasts: &[Vec<f64>]) -> Result<usize> {
    let len = forecasts
        .first()
        .map(Vec::len)
        .ok_or_else(|| NetArchError::invalid("no models"))?;
    if forecasts.iter().any(|f| f.len() != len) {
        return Err(NetArchError::invalid("forecast series lengths differ"));
    }
    Ok(len)
}

/// Applies fixed weights to per-model forecast series.
pub fn apply_weights(forecasts: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let len = check_columns(forecasts)?;
    if weights.len() != forecasts.len() {
        return Err(NetArchError::invalid("one weight per model required"));
    }
    Ok((0..len)
        .map(|t| forecasts.iter().zip(weights).map(|(f, w)| w * f[t]).sum())
        .collect())
}

pub fn simple_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

pub fn combine_simple(forecasts: &[Vec<f64>]) -> Result<Vec<f64>> {
    apply_weights(forecasts, &simple_weights(forecasts.len()))
}

/// `Sigma^{-1} 1 / (1' Sigma^{-1} 1)` with `Sigma` the sample covariance of
/// past errors (`t x m`), ridged by `1e-8 trace / m`.
pub fn minvar_weights(past_errors: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (t, m) = past_errors.shape();
    if m == 0 || t < m.max(2) {
        return Err(NetArchError::invalid(format!(
            "{t} past errors for {m} models; need at least max(m, 2)"
        )));
    }
    let means = past_errors.row_mean();
    let centered = DMatrix::from_fn(t, m, |s, k| past_errors[(s, k)] - means[k]);
    let mut sigma = centered.transpose() * &centered / (t - 1) as f64;
    let ridge = 1e-8 * sigma.trace() / m as f64;
    if !(ridge > 0.0) {
        return Err(NetArchError::SingularCovariance);
    }
    for i in 0..m {
        sigma[(i, i)] += ridge;
    }
    let ones = DVector::from_element(m, 1.0);
    let x = spd_solve_vec(&sigma, &ones).ok_or(NetArchError::SingularCovariance)?;
    let total = x.sum();
    if !total.is_finite() || total.abs() < f64::MIN_POSITIVE {
        return Err(NetArchError::SingularCovariance);
    }
    Ok(x.iter().map(|v| v / total).collect())
}

/// Least-squares weights of past forecasts (`t x m`) on realized values,
/// subject to summing to one. Written as `w = 1/m + N v` with `N` an
/// orthonormal basis of the sum-zero subspace, and solved with the minimum
/// norm pseudo-inverse so collinear forecasts fall back towards equal
/// weights.
pub fn cols_weights(past_realized: &[f64], past_forecasts: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (t, m) = past_forecasts.shape();
    if past_realized.len() != t {
        return Err(NetArchError::invalid(
            "realized and forecast histories differ in length",
        ));
    }
    if m == 0 || t <= m {
        return Err(NetArchError::invalid(format!(
            "{t} past dates for {m} models; need more dates than models"
        )));
    }
    let base = DVector::from_element(m, 1.0 / m as f64);
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let null = sum_zero_basis(m);
    let resid = DVector::from_column_slice(past_realized) - past_forecasts * &base;
    let a = past_forecasts * &null;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (t.max(m) as f64) * f64::EPSILON;
    let v = if smax > 0.0 {
        svd.solve(&resid, tol)
            .map_err(|_| NetArchError::RankDeficient)?
    } else {
        DVector::zeros(m - 1)
    };
    let w = base + null * v;
    if w.iter().any(|x| !x.is_finite()) {
        return Err(NetArchError::RankDeficient);
    }
    Ok(w.iter().copied().collect())
}

/// Orthonormal basis (m x (m-1)) of `{x : 1'x = 0}`, Helmert contrasts.
fn sum_zero_basis(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m - 1, |i, j| {
        let k = (j + 1) as f64;
        let s = (k * (k + 1.0)).sqrt();
        match i.cmp(&(j + 1)) {
            std::cmp::Ordering::Less => 1.0 / s,
            std::cmp::Ordering::Equal => -k / s,
            std::cmp::Ordering::Greater => 0.0,
        }
    })
}

pub fn combine_minvar(
    past_errors: &DMatrix<f64>,
    forecasts: &[Vec<f64>],
    model_ids: &[String],
) -> Result<(Vec<f64>, EnsembleWeights)> {
    let w = minvar_weights(past_errors)?;
    let combined = apply_weights(forecasts, &w)?;
    Ok((
        combined,
        EnsembleWeights {
            method: EnsembleMethod::MinVar,
            model_ids: model_ids.to_vec(),
            weights: w,
        },
    ))
}

pub fn combine_cols(
    past_realized: &[f64],
    past_forecasts: &DMatrix<f64>,
    forecasts: &[Vec<f64>],
    model_ids: &[String],
) -> Result<(Vec<f64>, EnsembleWeights)> {
    let w = cols_weights(past_realized, past_forecasts)?;
    let combined = apply_weights(forecasts, &w)?;
    Ok((
        combined,
        EnsembleWeights {
            method: EnsembleMethod::Cols,
            model_ids: model_ids.to_vec(),
            weights: w,
        },
    ))
}

/// Out-of-sample combination over an evaluation period. The combination at
/// date `t` uses weights estimated on dates `0..t` only; the first
/// `max(burn_in, m + 1)` dates take the simple average. Returns the combined series and
/// the weights used on the last date.
pub fn rolling_combination(
    realized: &[f64],
    forecasts: &[Vec<f64>],
    method: EnsembleMethod,
    burn_in: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = check_columns(forecasts)?;
    if realized.len() != len {
        return Err(NetArchError::invalid(
            "realized and forecast lengths differ",
        ));
    }
    let m = forecasts.len();
    let fmat = DMatrix::from_fn(len, m, |t, k| forecasts[k][t]);
    let mut out = Vec::with_capacity(len);
    let mut last = simple_weights(m);
    for t in 0..len {
        let w = if method == EnsembleMethod::Simple || t < burn_in.max(m + 1) {
            simple_weights(m)
        } else {
            let past = fmat.rows(0, t).into_owned();
            match method {
                EnsembleMethod::MinVar => {
                    let errs = DMatrix::from_fn(t, m, |s, k| past[(s, k)] - realized[s]);
                    minvar_weights(&errs)?
                }
                EnsembleMethod::Cols => cols_weights(&realized[..t], &past)?,
                EnsembleMethod::Simple => unreachable!(),
            }
        };
        out.push((0..m).map(|k| w[k] * fmat[(t, k)]).sum());
        last = w;
    }
    Ok((out, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn basis_is_orthonormal_and_sum_zero() {
        for m in 2..6 {
            let n = sum_zero_basis(m);
            let g = n.transpose() * &n;
            assert!((g - DMatrix::identity(m - 1, m - 1)).abs().max() < 1e-14);
            for j in 0..m - 1 {
                assert!(n.column(j).sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn minvar_two_uncorrelated() {
        // variances 1 and 4 give weights 0.8 and 0.2
        let e = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, -2.0, 1.0, -2.0, -1.0, 2.0]);
        let w = minvar_weights(&e).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-7 && (w[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn cols_recovers_exact_combination() {
        let mut rng = SplitMix64::new(3);
        let t = 50;
        let f = DMatrix::from_fn(t, 3, |_, _| rng.next_normal());
        let y: Vec<f64> = (0..t)
            .map(|s| 0.5 * f[(s, 0)] + 0.2 * f[(s, 1)] + 0.3 * f[(s, 2)])
            .collect();
        let w = cols_weights(&y, &f).unwrap();
        for (a, b) in w.iter().zip([0.5, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn minvar_ignores_error_means() {
        // a constant bias does not change the error covariance
        let e = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, -2.0, 1.0, -2.0, -1.0, 2.0]);
        let biased = e.map(|x| x + 5.0);
        let (a, b) = (
            minvar_weights(&e).unwrap(),
            minvar_weights(&biased).unwrap(),
        );
        assert!((a[0] - b[0]).abs() < 1e-12);
        assert!(minvar_weights(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn cols_picks_the_exact_model() {
        let mut rng = SplitMix64::new(8);
        let y: Vec<f64> = (0..40).map(|_| rng.next_normal()).collect();
        let f = DMatrix::from_fn(40, 2, |t, k| if k == 0 { y[t] } else { rng.next_normal() });
        let w = cols_weights(&y, &f).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-10 && w[1].abs() < 1e-10);
        assert!(cols_weights(&y[..2], &f.rows(0, 2).into_owned()).is_err());
    }

    #[test]
    fn cols_identical_forecasts_fall_back_to_equal() {
        let col: Vec<f64> = (0..20).map(|t| (t as f64).sin()).collect();
        let f = DMatrix::from_fn(20, 3, |t, _| col[t]);
        let y: Vec<f64> = col.iter().map(|x| x + 0.1).collect();
        let w = cols_weights(&y, &f).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rolling_burn_in_is_simple_average() {
        let f = vec![vec![1.0; 80], vec![3.0; 80]];
        let y = vec![1.0; 80];
        let (out, _) = rolling_combination(&y, &f, EnsembleMethod::Cols, 60).unwrap();
        assert!(out[..60].iter().all(|&v| v == 2.0));
        assert!((out[79] - 1.0).abs() < 1e-9);
    }
}
