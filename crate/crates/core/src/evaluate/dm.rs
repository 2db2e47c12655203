use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{NetArchError, Result};

pub const MIN_DM_OBS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    Absolute,
}

impl LossKind {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            LossKind::Squared => e * e,
            LossKind::Absolute => e.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided p-value against the alternative that model `a` has the
    /// larger expected loss.
    pub p_value: f64,
    pub mean_diff: f64,
    pub hac_lag: usize,
}

/// Bartlett truncation lag `floor(N^(1/3))`.
pub fn hac_lag(n: usize) -> usize {
    let mut l = (n as f64).cbrt().floor() as usize;
    // guard against cbrt rounding just below an exact cube
    while (l + 1).pow(3) <= n {
        l += 1;
    }
    l
}

/// Diebold-Mariano test on `d_t = g(e_a,t) - g(e_b,t)` with a Bartlett HAC
/// variance. A positive statistic means model `b` forecasts better.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], kind: LossKind) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(NetArchError::invalid("error series lengths differ"));
    }
    let n = errors_a.len();
    if n < MIN_DM_OBS {
        return Err(NetArchError::invalid(format!(
            "{n} forecast errors, need at least {MIN_DM_OBS}"
        )));
    }
    let d: Vec<f64> = errors_a
        .iter()
        .zip(errors_b)
        .map(|(&a, &b)| kind.apply(a) - kind.apply(b))
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = d.iter().map(|x| x - mean).collect();
    let lag = hac_lag(n);
    let autocov = |l: usize| c[l..].iter().zip(&c).map(|(x, y)| x * y).sum::<f64>() / n as f64;
    let mut lrv = autocov(0);
    for l in 1..=lag {
        lrv += 2.0 * (1.0 - l as f64 / (lag + 1) as f64) * autocov(l);
    }
    let var = lrv / n as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(NetArchError::ZeroVariance { mean_diff: mean });
    }
    let statistic = mean / var.sqrt();
    Ok(DmResult {
        statistic,
        p_value: upper_tail(statistic),
        mean_diff: mean,
        hac_lag: lag,
    })
}

/// `1 - Phi(z)` without cancellation in the upper tail.
pub(crate) fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn lag_rule() {
        assert_eq!(hac_lag(500), 7);
        assert_eq!(hac_lag(512), 8);
        assert_eq!(hac_lag(1000), 10);
        assert_eq!(hac_lag(30), 3);
    }

    #[test]
    fn hand_computed_statistic() {
        // squared losses differ by 1 on even dates and 0 on odd ones
        let n = 40;
        let a: Vec<f64> = (0..n).map(|t| if t % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let b = vec![0.0; n];
        let r = dm_test(&a, &b, LossKind::Squared).unwrap();
        // independent recomputation
        let d: Vec<f64> = a.iter().map(|x| x * x).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let g = |l: usize| (l..n).map(|t| (d[t] - m) * (d[t - l] - m)).sum::<f64>() / n as f64;
        let lag = 3;
        let lrv = g(0)
            + 2.0
                * (1..=lag)
                    .map(|l| (1.0 - l as f64 / 4.0) * g(l))
                    .sum::<f64>();
        let expect = m / (lrv / n as f64).sqrt();
        assert!((r.statistic - expect).abs() < 1e-12);
        assert_eq!(r.mean_diff, 0.5);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn identical_errors_have_zero_variance() {
        let a = vec![0.3; 50];
        match dm_test(&a, &a, LossKind::Absolute) {
            Err(NetArchError::ZeroVariance { mean_diff }) => assert_eq!(mean_diff, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equal_accuracy_is_roughly_uniform() {
        let mut rng = SplitMix64::new(11);
        let mut rejections = 0;
        for _ in 0..400 {
            let a: Vec<f64> = (0..200).map(|_| rng.next_normal()).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.next_normal()).collect();
            if dm_test(&a, &b, LossKind::Squared).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        // nominal 20 of 400
        assert!((5..=45).contains(&rejections), "{rejections}");
    }

    #[test]
    fn tail_matches_normal_cdf() {
        assert!((upper_tail(0.0) - 0.5).abs() < 1e-15);
        let v = upper_tail(1.959963984540054);
        assert!((v - 0.025).abs() < 1e-10, "{v}");
        assert!((upper_tail(-1.644853626951472) - 0.95).abs() < 1e-10);
    }
}
