//! Univariate log-ARCH(P): OLS on the autoregression of `ln Y^2`, smearing
//! correction of the intercept, and one-step forecasts.

use crate::domain::UnivariateFit;
use crate::error::{NetArchError, Result};
use crate::linalg::ols_with_intercept;

/// Smearing estimate `-ln((1/T) sum exp(u_t))`, evaluated with the maximum
/// factored out.
pub fn estimate_mu_star(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(NetArchError::invalid("no residuals"));
    }
    let m = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(NetArchError::Overflow);
    }
    let mean = residuals.iter().map(|u| (u - m).exp()).sum::<f64>() / residuals.len() as f64;
    let mu = -(m + mean.ln());
    if mu.is_finite() {
        Ok(mu)
    } else {
        Err(NetArchError::Overflow)
    }
}

/// Fits log-ARCH(`order`) to a log-squared series.
pub fn fit_logarch(series: &[f64], order: usize) -> Result<UnivariateFit> {
    if order == 0 {
        return Err(NetArchError::invalid("order must be at least 1"));
    }
    if series.len() <= order + 2 {
        return Err(NetArchError::invalid(format!(
            "series of length {} is too short for order {order}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(NetArchError::invalid(
            "log-squared series has non-finite values",
        ));
    }
    let t = series.len();
    let y = &series[order..];
    let lags: Vec<Vec<f64>> = (1..=order)
        .map(|l| series[order - l..t - l].to_vec())
        .collect();
    let ols = ols_with_intercept(y, &lags).ok_or(NetArchError::SingularDesign)?;
    let mu_star = estimate_mu_star(&ols.residuals)?;
    Ok(UnivariateFit {
        phi0: ols.intercept,
        gamma: ols.coefs,
        mu_star,
        omega: ols.intercept - mu_star,
        order,
        residuals: ols.residuals,
    })
}

/// One-step log-variance forecast. `recent` holds the latest observations in
/// time order; its last `order` values are used.
pub fn forecast_one_step(fit: &UnivariateFit, recent: &[f64]) -> Result<f64> {
    let p = fit.order;
    if recent.len() < p {
        return Err(NetArchError::invalid(format!(
            "need {p} lagged values, got {}",
            recent.len()
        )));
    }
    let last = recent.len() - 1;
    Ok(fit.omega + (0..p).map(|k| fit.gamma[k] * recent[last - k]).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_univariate, InnovationSpec};

    fn log_sq(y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v * v).ln()).collect()
    }

    #[test]
    fn mu_star_examples() {
        assert_eq!(estimate_mu_star(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let ln2 = 2f64.ln();
        assert!((estimate_mu_star(&[ln2, ln2]).unwrap() + ln2).abs() < 1e-15);
        assert!((estimate_mu_star(&[0.0, 3f64.ln()]).unwrap() + ln2).abs() < 1e-15);
    }

    #[test]
    fn mu_star_survives_large_residuals() {
        let mu = estimate_mu_star(&[800.0, 800.0]).unwrap();
        assert!((mu + 800.0).abs() < 1e-12);
        assert!(estimate_mu_star(&[]).is_err());
    }

    #[test]
    fn constant_series_is_singular() {
        assert!(matches!(
            fit_logarch(&[-3.0; 50], 1),
            Err(NetArchError::SingularDesign)
        ));
    }

    #[test]
    fn forecast_examples() {
        let fit = UnivariateFit {
            phi0: 0.0,
            gamma: vec![0.5],
            mu_star: 0.0,
            omega: 0.0,
            order: 1,
            residuals: vec![0.0],
        };
        assert_eq!(forecast_one_step(&fit, &[-4.0]).unwrap(), -2.0);
        let flat = UnivariateFit {
            gamma: vec![0.0],
            omega: 1.25,
            ..fit
        };
        assert_eq!(forecast_one_step(&flat, &[-4.0]).unwrap(), 1.25);
        assert_eq!(forecast_one_step(&flat, &[7.0, 3.0]).unwrap(), 1.25);
    }

    #[test]
    fn identity_and_centered_residuals() {
        let y =
            simulate_univariate(0.1, &[0.3, 0.2], 3000, 500, &InnovationSpec { seed: 9 }).unwrap();
        let fit = fit_logarch(&log_sq(&y), 2).unwrap();
        assert!((fit.omega + fit.mu_star - fit.phi0).abs() < 1e-12);
        let mean = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
        assert!(mean.abs() < 1e-10);
        assert_eq!(fit.residuals.len(), 3000 - 2);
    }

    #[test]
    fn recovers_log_arch_one() {
        let y =
            simulate_univariate(0.1, &[0.5], 100_000, 1000, &InnovationSpec { seed: 1 }).unwrap();
        let fit = fit_logarch(&log_sq(&y), 1).unwrap();
        assert!((fit.phi0 - 0.1).abs() < 0.02, "phi0 {}", fit.phi0);
        assert!((fit.gamma[0] - 0.5).abs() < 0.02, "phi1 {}", fit.gamma[0]);
        // smearing recovers E ln eps^2 of the normal law
        assert!((fit.mu_star - crate::simulate::E_LOG_CHI2_1).abs() < 0.05);
    }

    #[test]
    fn white_noise_has_no_arch_effect() {
        let y = simulate_univariate(-8.0, &[0.0], 5000, 500, &InnovationSpec { seed: 4 }).unwrap();
        let fit = fit_logarch(&log_sq(&y), 1).unwrap();
        // OLS standard error of an AR(1) slope under the null is 1/sqrt(T)
        let se = 1.0 / (fit.residuals.len() as f64).sqrt();
        assert!(fit.gamma[0].abs() < 3.0 * se, "phi1 {}", fit.gamma[0]);
    }
}
