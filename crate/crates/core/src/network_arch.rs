//! Dynamic network log-ARCH(1): GMM estimation with instantaneous network
//! spillovers and joint one-step forecasting.
//!
//! The autoregression of the log-squared panel reads
//!
//! ```text
//! Y*_t = phi0 + rho W Y*_t + Gamma Y*_{t-1} + u_t
//! ```
//!
//! Forward orthogonal deviations (a Helmert transform along time) remove the
//! per-stock constants. `W Y*_t` is endogenous and is instrumented by the
//! network lags `W^a Y*_{t-1}`, `a = 1..=depth`; the lagged own series enter
//! as their own instruments, one column per stock. Estimation is two-step
//! linear GMM: first with weight `(H'H)^{-1}`, then with the inverse of the
//! heteroskedasticity-robust moment covariance. The constants are recovered
//! afterwards from the untransformed residuals, and the smearing estimate of
//! each stock's residual mean gives the forecast constant.

use nalgebra::{DMatrix, DVector};

use crate::domain::{EdgeWeightMatrix, ForecastConstant, LogVolPanel, NetworkFit};
use crate::error::{NetArchError, Result};
use crate::linalg::{spd_solve, spectral_radius};
use crate::univariate::estimate_mu_star;

pub const DEFAULT_INSTRUMENT_DEPTH: usize = 2;

/// Forward orthogonal deviations of one series: for `t = 1..T-1`,
/// `z_t = c_t (x_t - mean(x_{t+1..T}))` with `c_t = sqrt((T-t)/(T-t+1))`.
pub fn helmert_row(x: &[f64]) -> Vec<f64> {
    let t_len = x.len();
    if t_len < 2 {
        return Vec::new();
    }
    let mut out = vec![0.0; t_len - 1];
    let mut suffix = 0.0;
    for t in (0..t_len - 1).rev() {
        suffix += x[t + 1];
        let remaining = (t_len - 1 - t) as f64;
        let c = (remaining / (remaining + 1.0)).sqrt();
        out[t] = c * (x[t] - suffix / remaining);
    }
    out
}

/// Row-wise Helmert transform, n x T to n x (T-1).
pub fn helmert_transform(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t_len) = x.shape();
    let cols = t_len.saturating_sub(1);
    let mut out = DMatrix::zeros(n, cols);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        for (t, v) in helmert_row(&row).into_iter().enumerate() {
            out[(i, t)] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSpec {
    Estimate,
    /// Hold `rho` at a known value; the stocks then decouple and each
    /// `gamma_i` is the within-stock least-squares slope.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEstimator {
    pub instrument_depth: usize,
    pub rho: RhoSpec,
}

impl Default for NetworkEstimator {
    fn default() -> Self {
        Self {
            instrument_depth: DEFAULT_INSTRUMENT_DEPTH,
            rho: RhoSpec::Estimate,
        }
    }
}

/// Moment system of the transformed equation in cross-product form.
///
/// Parameters are ordered `(rho, gamma_1, .., gamma_n)`; instruments are the
/// `n` stock-specific lags followed by the `depth` pooled network lags.
#[derive(Debug, Clone)]
pub struct GmmSystem {
    n: usize,
    depth: usize,
    rows: usize,
    /// Transformed series, n x R each.
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    wy: DMatrix<f64>,
    zx: Vec<DMatrix<f64>>,
    hh: DMatrix<f64>,
    hx: DMatrix<f64>,
    hy: DVector<f64>,
}

impl GmmSystem {
    /// Builds the system from an n x T log-squared panel.
    pub fn new(values: &DMatrix<f64>, w: &DMatrix<f64>, depth: usize) -> Result<Self> {
        let (n, t_len) = values.shape();
        if t_len < 3 {
            return Err(NetArchError::invalid("need at least 3 dates"));
        }
        if w.shape() != (n, n) {
            return Err(NetArchError::invalid("W does not match the panel"));
        }
        if depth == 0 {
            return Err(NetArchError::invalid("instrument depth must be at least 1"));
        }
        let cur = values.columns(1, t_len - 1).into_owned();
        let lag = values.columns(0, t_len - 1).into_owned();
        let w_cur = w * &cur;
        let mut powers = Vec::with_capacity(depth);
        let mut p = w * &lag;
        for a in 0..depth {
            if a > 0 {
                p = w * &p;
            }
            powers.push(helmert_transform(&p));
        }
        let y = helmert_transform(&cur);
        let x = helmert_transform(&lag);
        let wy = helmert_transform(&w_cur);
        let full = Self::assemble(y, x, wy, powers);

        // Network lags can be exactly collinear with the own lags or with
        // each other (a complete graph, say); keep an independent subset.
        let mut kept: Vec<usize> = Vec::new();
        for a in 0..depth {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.extend(kept.iter().map(|&b| n + b));
            let k = DMatrix::from_fn(idx.len(), idx.len(), |r, c| full.hh[(idx[r], idx[c])]);
            let h = DMatrix::from_fn(idx.len(), 1, |r, _| full.hh[(idx[r], n + a)]);
            let diag = full.hh[(n + a, n + a)];
            let explained = spd_solve(&k, &h).map(|sol| (h.transpose() * sol)[(0, 0)]);
            if let Some(explained) = explained {
                if diag - explained > 1e-10 * diag && diag > 0.0 {
                    kept.push(a);
                }
            }
        }
        if kept.is_empty() {
            return Err(NetArchError::SingularMoment(
                "network lags carry no information beyond the own lags".into(),
            ));
        }
        if kept.len() == depth {
            return Ok(full);
        }
        let Self { y, x, wy, zx, .. } = full;
        let mut zx: Vec<Option<DMatrix<f64>>> = zx.into_iter().map(Some).collect();
        let powers = kept.iter().map(|&a| zx[a].take().unwrap()).collect();
        Ok(Self::assemble(y, x, wy, powers))
    }

    fn assemble(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        wy: DMatrix<f64>,
        powers: Vec<DMatrix<f64>>,
    ) -> Self {
        let (n, rows) = y.shape();
        let depth = powers.len();
        let q = n + depth;
        let mut hh = DMatrix::zeros(q, q);
        let mut hx = DMatrix::zeros(q, n + 1);
        let mut hy = DVector::zeros(q);
        for i in 0..n {
            for t in 0..rows {
                let xv = x[(i, t)];
                let (yv, wyv) = (y[(i, t)], wy[(i, t)]);
                hh[(i, i)] += xv * xv;
                hx[(i, 0)] += xv * wyv;
                hx[(i, 1 + i)] += xv * xv;
                hy[i] += xv * yv;
                for a in 0..depth {
                    let za = powers[a][(i, t)];
                    hh[(i, n + a)] += xv * za;
                    hx[(n + a, 0)] += za * wyv;
                    hx[(n + a, 1 + i)] += za * xv;
                    hy[n + a] += za * yv;
                    for b in 0..=a {
                        hh[(n + a, n + b)] += za * powers[b][(i, t)];
                    }
                }
            }
        }
        symmetrize_from_partial(&mut hh, n, depth);
        Self {
            n,
            depth,
            rows,
            y,
            x,
            wy,
            zx: powers,
            hh,
            hx,
            hy,
        }
    }

    /// Number of network-lag instruments retained.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_params(&self) -> usize {
        self.n + 1
    }

    /// Transformed residuals `y - X theta`, n x R.
    pub fn residuals(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.rows, |i, t| {
            self.y[(i, t)] - theta[0] * self.wy[(i, t)] - theta[1 + i] * self.x[(i, t)]
        })
    }

    /// `sum_r u_r^2 h_r h_r'`.
    pub fn moment_covariance(&self, resid: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, d) = (self.n, self.depth);
        let mut s = DMatrix::zeros(n + d, n + d);
        for i in 0..n {
            for t in 0..self.rows {
                let u2 = resid[(i, t)] * resid[(i, t)];
                let xv = self.x[(i, t)];
                s[(i, i)] += u2 * xv * xv;
                for a in 0..d {
                    let za = self.zx[a][(i, t)];
                    s[(i, n + a)] += u2 * xv * za;
                    for b in 0..=a {
                        s[(n + a, n + b)] += u2 * za * self.zx[b][(i, t)];
                    }
                }
            }
        }
        symmetrize_from_partial(&mut s, n, d);
        s
    }

    /// Linear GMM estimate for the weight `weight_inv^{-1}`.
    pub fn estimate(&self, weight_inv: &DMatrix<f64>) -> Result<DVector<f64>> {
        let b = spd_solve(weight_inv, &self.hx)
            .ok_or_else(|| NetArchError::SingularMoment("instrument cross-products".into()))?;
        let c = spd_solve(
            weight_inv,
            &DMatrix::from_column_slice(self.hy.len(), 1, self.hy.as_slice()),
        )
        .ok_or_else(|| NetArchError::SingularMoment("instrument cross-products".into()))?;
        let m = self.hx.transpose() * &b;
        let v = self.hx.transpose() * &c;
        let theta = spd_solve(&m, &v).ok_or_else(|| {
            NetArchError::SingularMoment("instruments do not identify the parameters".into())
        })?;
        Ok(DVector::from_column_slice(theta.as_slice()))
    }

    /// `e'H S^{-1} H'e` for residuals `e = y - X theta`.
    pub fn objective(&self, theta: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
        let he = &self.hy - &self.hx * theta;
        let sol = spd_solve(s, &DMatrix::from_column_slice(he.len(), 1, he.as_slice()))
            .ok_or_else(|| NetArchError::SingularMoment("moment covariance".into()))?;
        Ok(he.dot(&DVector::from_column_slice(sol.as_slice())))
    }

    /// Plug-in covariance `(X'H S^{-1} H'X)^{-1}`.
    pub fn covariance(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let b = spd_solve(s, &self.hx)
            .ok_or_else(|| NetArchError::SingularMoment("moment covariance".into()))?;
        let m = self.hx.transpose() * b;
        spd_solve(&m, &DMatrix::identity(self.n + 1, self.n + 1))
            .ok_or_else(|| NetArchError::SingularMoment("parameter covariance".into()))
    }

    pub fn instrument_cross_products(&self) -> &DMatrix<f64> {
        &self.hh
    }
}

fn symmetrize_from_partial(m: &mut DMatrix<f64>, n: usize, d: usize) {
    for i in 0..n {
        for a in 0..d {
            m[(n + a, i)] = m[(i, n + a)];
        }
    }
    for a in 0..d {
        for b in 0..a {
            m[(n + b, n + a)] = m[(n + a, n + b)];
        }
    }
}

/// Largest `|rho|` for which `I - rho W` stays invertible and the network
/// filter is stable.
pub fn rho_bound(w: &EdgeWeightMatrix) -> f64 {
    if w.is_row_normalized() {
        1.0
    } else {
        let r = spectral_radius(w.weights());
        if r > 0.0 {
            1.0 / r
        } else {
            f64::INFINITY
        }
    }
}

fn within_slopes(sys: &GmmSystem, rho: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gamma = Vec::with_capacity(sys.n);
    let mut se = Vec::with_capacity(sys.n);
    for i in 0..sys.n {
        let (mut sxx, mut sxy, mut level) = (0.0, 0.0, 0.0);
        for t in 0..sys.rows {
            let xv = sys.x[(i, t)];
            sxx += xv * xv;
            sxy += xv * (sys.y[(i, t)] - rho * sys.wy[(i, t)]);
            level += xv.abs();
        }
        if !(sxx > 0.0) || !(sxx.sqrt() > 1e-12 * level / (sys.rows as f64).sqrt()) {
            return Err(NetArchError::SingularDesign);
        }
        let g = sxy / sxx;
        let mut meat = 0.0;
        for t in 0..sys.rows {
            let xv = sys.x[(i, t)];
            let u = sys.y[(i, t)] - rho * sys.wy[(i, t)] - g * xv;
            meat += xv * xv * u * u;
        }
        gamma.push(g);
        se.push(meat.sqrt() / sxx);
    }
    Ok((gamma, se))
}

/// Fits the network log-ARCH(1) model to an n x T log-squared panel.
pub fn fit_network_with(
    values: &DMatrix<f64>,
    w: &EdgeWeightMatrix,
    estimator: &NetworkEstimator,
    w_ref: &str,
) -> Result<NetworkFit> {
    let n = values.nrows();
    let depth = match estimator.rho {
        RhoSpec::Estimate => estimator.instrument_depth,
        RhoSpec::Fixed(_) => 1,
    };
    let sys = GmmSystem::new(values, w.weights(), depth)?;

    let (rho, gamma, std_errors, objective, depth_used) = match estimator.rho {
        RhoSpec::Fixed(rho) => {
            let (gamma, se) = within_slopes(&sys, rho)?;
            let mut all_se = vec![0.0];
            all_se.extend(se);
            (rho, gamma, all_se, 0.0, 0)
        }
        RhoSpec::Estimate => {
            let first = sys.estimate(&sys.hh)?;
            let s = sys.moment_covariance(&sys.residuals(&first));
            let theta = sys.estimate(&s)?;
            let cov = sys.covariance(&s)?;
            let objective = sys.objective(&theta, &s)?;
            let se = (0..=n).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
            (
                theta[0],
                theta.iter().skip(1).copied().collect::<Vec<_>>(),
                se,
                objective,
                sys.depth(),
            )
        }
    };

    if !rho.is_finite() || gamma.iter().any(|g| !g.is_finite()) {
        return Err(NetArchError::SingularMoment("non-finite estimate".into()));
    }
    let bound = rho_bound(w);
    if rho.abs() >= bound {
        return Err(NetArchError::UnstableRho { rho, bound });
    }

    // constants from the untransformed equation
    let t_len = values.ncols();
    let cur = values.columns(1, t_len - 1);
    let lag = values.columns(0, t_len - 1);
    let w_cur = w.weights() * cur;
    let mut resid = DMatrix::from_fn(n, t_len - 1, |i, t| {
        cur[(i, t)] - rho * w_cur[(i, t)] - gamma[i] * lag[(i, t)]
    });
    let mut phi0 = Vec::with_capacity(n);
    let mut mu_star = Vec::with_capacity(n);
    for i in 0..n {
        let mean = resid.row(i).iter().sum::<f64>() / (t_len - 1) as f64;
        resid.row_mut(i).iter_mut().for_each(|u| *u -= mean);
        let row: Vec<f64> = resid.row(i).iter().copied().collect();
        phi0.push(mean);
        mu_star.push(estimate_mu_star(&row)?);
    }

    Ok(NetworkFit {
        rho,
        gamma_diag: gamma,
        phi0,
        mu_star,
        residual_panel: resid,
        w_ref: w_ref.to_string(),
        instrument_depth: depth_used,
        rho_fixed: matches!(estimator.rho, RhoSpec::Fixed(_)),
        std_errors,
        objective,
    })
}

/// Fits with `rho` estimated and network lags up to `instrument_depth` as
/// instruments.
pub fn fit_network_logarch(
    volpanel: &LogVolPanel,
    w: &EdgeWeightMatrix,
    instrument_depth: usize,
) -> Result<NetworkFit> {
    fit_network_with(
        &volpanel.values,
        w,
        &NetworkEstimator {
            instrument_depth,
            rho: RhoSpec::Estimate,
        },
        "W",
    )
}

/// Joint one-step forecast `(I - rho W)^{-1} (Gamma y_T + phi0 - mu*)`,
/// solved as a linear system.
pub fn forecast_network_one_step(
    fit: &NetworkFit,
    w: &EdgeWeightMatrix,
    last_obs: &[f64],
) -> Result<Vec<f64>> {
    forecast_network_one_step_with(fit, w, last_obs, ForecastConstant::Smearing)
}

/// Joint one-step forecast `(I - rho W)^{-1} (Gamma y_T + c)` with the
/// constant `c` chosen by `constant`.
pub fn forecast_network_one_step_with(
    fit: &NetworkFit,
    w: &EdgeWeightMatrix,
    last_obs: &[f64],
    constant: ForecastConstant,
) -> Result<Vec<f64>> {
    let n = w.n_nodes();
    if fit.gamma_diag.len() != n || last_obs.len() != n {
        return Err(NetArchError::invalid("fit, W and observation sizes differ"));
    }
    let bound = rho_bound(w);
    if fit.rho.abs() >= bound {
        return Err(NetArchError::UnstableRho {
            rho: fit.rho,
            bound,
        });
    }
    let constants = fit.forecast_constants_with(constant);
    let rhs = DVector::from_fn(n, |i, _| fit.gamma_diag[i] * last_obs[i] + constants[i]);
    let a = DMatrix::identity(n, n) - w.weights() * fit.rho;
    let h = a.lu().solve(&rhs).ok_or(NetArchError::SingularSystem)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(NetArchError::SingularSystem);
    }
    Ok(h.iter().copied().collect())
}
