//! Data-generating processes for the univariate and network log-ARCH
//! models, driven by standard normal innovations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{EdgeWeightMatrix, ReturnPanel};
use crate::error::{NetArchError, Result};
use crate::linalg::spectral_radius;
use crate::network::{weights_knn, DistanceKind, DistanceMatrix};
use crate::rng::SplitMix64;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E ln eps^2 = -(gamma_EM + ln 2)` for a standard normal `eps`.
pub const E_LOG_CHI2_1: f64 = -(EULER_GAMMA + std::f64::consts::LN_2);

/// `Var ln eps^2 = pi^2 / 2` for a standard normal `eps`.
pub const VAR_LOG_CHI2_1: f64 = std::f64::consts::PI * std::f64::consts::PI / 2.0;

pub const MIN_BURN_IN: usize = 500;

/// Innovations are i.i.d. standard normal drawn from a seeded SplitMix64
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub seed: u64,
}

/// Simulates `t_len` returns of a log-ARCH(P) process after discarding
/// `burn_in` draws. `phi0` is the intercept of the autoregression of
/// `ln Y^2`, so `omega = phi0 - E ln eps^2`.
pub fn simulate_univariate(
    phi0: f64,
    gamma: &[f64],
    t_len: usize,
    burn_in: usize,
    spec: &InnovationSpec,
) -> Result<Vec<f64>> {
    let persistence: f64 = gamma.iter().map(|g| g.abs()).sum();
    if persistence >= 1.0 {
        return Err(NetArchError::Nonstationary(format!(
            "sum of |gamma| = {persistence} >= 1"
        )));
    }
    if burn_in < MIN_BURN_IN {
        return Err(NetArchError::invalid(format!(
            "burn-in must be at least {MIN_BURN_IN}"
        )));
    }
    let p = gamma.len();
    let omega = phi0 - E_LOG_CHI2_1;
    let stationary_mean = phi0 / (1.0 - gamma.iter().sum::<f64>());
    let mut lags = vec![stationary_mean; p];
    let mut rng = SplitMix64::new(spec.seed);
    let mut out = Vec::with_capacity(t_len);
    for step in 0..burn_in + t_len {
        let log_h = omega + gamma.iter().zip(&lags).map(|(g, x)| g * x).sum::<f64>();
        let eps = rng.next_normal();
        let log_y2 = log_h + 2.0 * eps.abs().ln();
        if p > 0 {
            lags.rotate_right(1);
            lags[0] = log_y2;
        }
        if step >= burn_in {
            out.push((0.5 * log_h).exp() * eps);
        }
    }
    Ok(out)
}

/// Full output of a network simulation.
#[derive(Debug, Clone)]
pub struct NetworkSimulation {
    pub panel: ReturnPanel,
    /// `Y*_t = ln Y_t^2`, n x T.
    pub log_sq: DMatrix<f64>,
    /// `ln eps_t^2`, n x T.
    pub log_eps_sq: DMatrix<f64>,
    /// `Y*` at the last burn-in date, the lag of the first kept column.
    pub initial: DVector<f64>,
}

/// Parameters of a network log-ARCH(1) process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProcess {
    pub phi0: Vec<f64>,
    pub rho: f64,
    pub gamma_diag: Vec<f64>,
}

impl NetworkProcess {
    /// Spectral radius of `(I - rho W)^{-1} Gamma`.
    pub fn companion_radius(&self, w: &EdgeWeightMatrix) -> Result<f64> {
        let n = w.n_nodes();
        let a = DMatrix::identity(n, n) - w.weights() * self.rho;
        let lu = a.lu();
        let gamma = DMatrix::from_diagonal(&DVector::from_vec(self.gamma_diag.clone()));
        let comp = lu.solve(&gamma).ok_or(NetArchError::SingularSystem)?;
        Ok(spectral_radius(&comp))
    }
}

/// Simulates the network log-ARCH(1) process through its reduced form
/// `Y*_t = (I - rho W)^{-1} (omega + Gamma Y*_{t-1} + ln eps_t^2)`.
pub fn simulate_network_detailed(
    process: &NetworkProcess,
    w: &EdgeWeightMatrix,
    t_len: usize,
    burn_in: usize,
    spec: &InnovationSpec,
) -> Result<NetworkSimulation> {
    let n = w.n_nodes();
    if process.phi0.len() != n || process.gamma_diag.len() != n {
        return Err(NetArchError::invalid("parameter lengths do not match W"));
    }
    if burn_in < MIN_BURN_IN {
        return Err(NetArchError::invalid(format!(
            "burn-in must be at least {MIN_BURN_IN}"
        )));
    }
    if t_len < 2 {
        return Err(NetArchError::invalid("need at least 2 dates"));
    }
    if w.is_row_normalized() && process.rho.abs() >= 1.0 {
        return Err(NetArchError::Nonstationary(format!(
            "|rho| = {} >= 1 on a row-normalized W",
            process.rho.abs()
        )));
    }
    let radius = process.companion_radius(w)?;
    if !(radius < 1.0) {
        return Err(NetArchError::Nonstationary(format!(
            "companion spectral radius {radius} >= 1"
        )));
    }

    let a = DMatrix::identity(n, n) - w.weights() * process.rho;
    let lu = a.clone().lu();
    let phi0 = DVector::from_vec(process.phi0.clone());
    let gamma = DVector::from_vec(process.gamma_diag.clone());
    let omega = phi0.map(|p| p - E_LOG_CHI2_1);

    // start at the stationary mean: (I - rho W - Gamma) m = phi0
    let mut state = (a - DMatrix::from_diagonal(&gamma))
        .lu()
        .solve(&phi0)
        .ok_or(NetArchError::SingularSystem)?;

    let mut rng = SplitMix64::new(spec.seed);
    let mut log_sq = DMatrix::zeros(n, t_len);
    let mut log_eps_sq = DMatrix::zeros(n, t_len);
    let mut signs = DMatrix::zeros(n, t_len);
    let mut initial = state.clone();
    let mut rhs = DVector::zeros(n);
    let mut le = DVector::zeros(n);
    for step in 0..burn_in + t_len {
        for i in 0..n {
            let eps = rng.next_normal();
            le[i] = 2.0 * eps.abs().ln();
            if step >= burn_in {
                signs[(i, step - burn_in)] = if eps < 0.0 { -1.0 } else { 1.0 };
            }
        }
        for i in 0..n {
            rhs[i] = omega[i] + gamma[i] * state[i] + le[i];
        }
        let next = lu.solve(&rhs).ok_or(NetArchError::SingularSystem)?;
        if step + 1 == burn_in {
            initial = next.clone();
        }
        if step >= burn_in {
            let t = step - burn_in;
            log_sq.set_column(t, &next);
            log_eps_sq.set_column(t, &le);
        }
        state = next;
    }
    let returns = DMatrix::from_fn(n, t_len, |i, t| {
        signs[(i, t)] * (0.5 * log_sq[(i, t)]).exp()
    });
    let panel = ReturnPanel::new(
        (0..n).map(|i| format!("S{:02}", i + 1)).collect(),
        (0..t_len).map(|t| format!("t{:07}", t + 1)).collect(),
        returns,
    )?;
    Ok(NetworkSimulation {
        panel,
        log_sq,
        log_eps_sq,
        initial,
    })
}

pub fn simulate_network(
    process: &NetworkProcess,
    w: &EdgeWeightMatrix,
    t_len: usize,
    burn_in: usize,
    spec: &InnovationSpec,
) -> Result<ReturnPanel> {
    simulate_network_detailed(process, w, t_len, burn_in, spec).map(|s| s.panel)
}

/// k-nearest-neighbour weights among `n` points drawn uniformly in the unit
/// square.
pub fn random_knn_weights(n: usize, k: usize, seed: u64) -> Result<EdgeWeightMatrix> {
    let mut rng = SplitMix64::new(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
    let d = DMatrix::from_fn(n, n, |i, j| {
        ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
    });
    let dm = DistanceMatrix {
        tickers: (0..n).map(|i| format!("S{:02}", i + 1)).collect(),
        d,
        kind: DistanceKind::Euclidean,
        ar_orders: None,
    };
    weights_knn(&dm, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Normalization, WeightKind};

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (
            m,
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn log_chi2_constant() {
        assert!((E_LOG_CHI2_1 + 1.2703628454614782).abs() < 1e-15);
    }

    #[test]
    fn white_noise_mean_matches_log_chi2() {
        let t = 50_000;
        let omega = -7.0;
        let phi0 = omega + E_LOG_CHI2_1;
        let y = simulate_univariate(phi0, &[0.0], t, 500, &InnovationSpec { seed: 11 }).unwrap();
        let ls: Vec<f64> = y.iter().map(|v| (v * v).ln()).collect();
        let (m, _) = mean_var(&ls);
        let tol = 3.0 * VAR_LOG_CHI2_1.sqrt() / (t as f64).sqrt();
        assert!((m - (omega + E_LOG_CHI2_1)).abs() < tol, "mean {m}");
    }

    #[test]
    fn univariate_is_seed_deterministic() {
        let spec = InnovationSpec { seed: 5 };
        let a = simulate_univariate(0.1, &[0.4], 200, 500, &spec).unwrap();
        let b = simulate_univariate(0.1, &[0.4], 200, 500, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn univariate_guards() {
        let spec = InnovationSpec { seed: 5 };
        assert!(matches!(
            simulate_univariate(0.1, &[0.99, 0.01], 100, 500, &spec),
            Err(NetArchError::Nonstationary(_))
        ));
        assert!(simulate_univariate(0.1, &[0.99], 100, 500, &spec).is_ok());
        assert!(simulate_univariate(0.1, &[0.5], 100, 10, &spec).is_err());
    }

    fn ring(n: usize) -> EdgeWeightMatrix {
        let w = DMatrix::from_fn(n, n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i {
                0.5
            } else {
                0.0
            }
        });
        EdgeWeightMatrix::new(w, WeightKind::Knn { k: 2 }, Normalization::RowNormalized).unwrap()
    }

    #[test]
    fn network_residual_identity() {
        let w = ring(6);
        let proc = NetworkProcess {
            phi0: vec![-9.0, -8.5, -9.2, -8.8, -9.1, -8.7],
            rho: 0.4,
            gamma_diag: vec![0.2, 0.3, 0.25, 0.35, 0.1, 0.3],
        };
        let sim =
            simulate_network_detailed(&proc, &w, 300, 500, &InnovationSpec { seed: 2 }).unwrap();
        let wy = w.weights() * &sim.log_sq;
        let mut worst: f64 = 0.0;
        for t in 0..300 {
            for i in 0..6 {
                let lag = if t == 0 {
                    sim.initial[i]
                } else {
                    sim.log_sq[(i, t - 1)]
                };
                let omega = proc.phi0[i] - E_LOG_CHI2_1;
                let r = sim.log_sq[(i, t)]
                    - proc.rho * wy[(i, t)]
                    - proc.gamma_diag[i] * lag
                    - omega
                    - sim.log_eps_sq[(i, t)];
                worst = worst.max(r.abs());
            }
        }
        assert!(worst <= 1e-10, "max residual {worst}");
        // the returned panel carries the same log-squares
        let r = sim.panel.returns();
        assert!(((r[(2, 7)] * r[(2, 7)]).ln() - sim.log_sq[(2, 7)]).abs() < 1e-12);
    }

    #[test]
    fn network_is_seed_deterministic() {
        let w = ring(5);
        let proc = NetworkProcess {
            phi0: vec![-9.0; 5],
            rho: 0.3,
            gamma_diag: vec![0.3; 5],
        };
        let spec = InnovationSpec { seed: 77 };
        let a = simulate_network(&proc, &w, 100, 500, &spec).unwrap();
        let b = simulate_network(&proc, &w, 100, 500, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explosive_companion_rejected() {
        let w = ring(5);
        let proc = NetworkProcess {
            phi0: vec![-9.0; 5],
            rho: 0.9,
            gamma_diag: vec![0.5; 5],
        };
        // eigenvalue 1 of W maps to 0.5 / (1 - 0.9) = 5
        assert!((proc.companion_radius(&w).unwrap() - 5.0).abs() < 1e-9);
        assert!(matches!(
            simulate_network(&proc, &w, 100, 500, &InnovationSpec { seed: 1 }),
            Err(NetArchError::Nonstationary(_))
        ));
    }

    #[test]
    fn rho_zero_matches_univariate_moments() {
        let t = 100_000;
        let w = ring(3);
        let proc = NetworkProcess {
            phi0: vec![0.1; 3],
            rho: 0.0,
            gamma_diag: vec![0.5; 3],
        };
        let sim =
            simulate_network_detailed(&proc, &w, t, 500, &InnovationSpec { seed: 21 }).unwrap();
        let uni = simulate_univariate(0.1, &[0.5], t, 500, &InnovationSpec { seed: 22 }).unwrap();
        let u: Vec<f64> = uni.iter().map(|v| (v * v).ln()).collect();
        let s: Vec<f64> = sim.log_sq.row(0).iter().copied().collect();
        let (mu, vu) = mean_var(&u);
        let (ms, vs) = mean_var(&s);
        // stationary mean 0.2 and variance (pi^2/2)/(1-0.25)
        let v_theory = VAR_LOG_CHI2_1 / 0.75;
        let se_mean = (v_theory * 3.0 / t as f64).sqrt();
        assert!((mu - ms).abs() < 4.0 * se_mean, "means {mu} {ms}");
        assert!((vu - vs).abs() / v_theory < 0.05, "vars {vu} {vs}");
        assert!((ms - 0.2).abs() < 4.0 * se_mean);
    }

    #[test]
    fn random_knn_is_valid() {
        let w = random_knn_weights(10, 3, 4).unwrap();
        assert_eq!(w.kind(), WeightKind::Knn { k: 3 });
    }
}
