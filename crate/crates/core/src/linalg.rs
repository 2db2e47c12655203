//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Relative pivot floor below which a symmetric positive semi-definite
/// matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

/// Solves `a x = b` for symmetric positive definite `a`.
///
/// The matrix is first scaled to unit diagonal so the singularity check is
/// invariant to column scaling. Returns `None` when a diagonal entry is not
/// positive or a Cholesky pivot falls below `PIVOT_TOL`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return None;
    }
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > max_diag * 1e-300) {
            return None;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let chol = scaled.clone().cholesky()?;
    let l = chol.l_dirty();
    for i in 0..n {
        if !(l[(i, i)] * l[(i, i)] > PIVOT_TOL) {
            return None;
        }
    }
    let rhs = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * scale[i]);
    let y = chol.solve(&rhs);
    Some(DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
        y[(i, j)] * scale[i]
    }))
}

pub fn spd_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    spd_solve(a, &bm).map(|x| DVector::from_column_slice(x.as_slice()))
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Ordinary least squares of `y` on an intercept and the columns of `x`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

/// OLS with intercept, solved on centered normal equations.
///
/// Returns `None` if some regressor is (numerically) collinear with the
/// intercept or with the other regressors.
pub fn ols_with_intercept(y: &[f64], x: &[Vec<f64>]) -> Option<OlsFit> {
    let n = y.len();
    let p = x.len();
    if n == 0 || x.iter().any(|c| c.len() != n) {
        return None;
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let x_means: Vec<f64> = x.iter().map(|c| c.iter().sum::<f64>() / nf).collect();

    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    for t in 0..n {
        let yc = y[t] - y_mean;
        for a in 0..p {
            let xa = x[a][t] - x_means[a];
            xty[a] += xa * yc;
            for b in 0..=a {
                xtx[(a, b)] += xa * (x[b][t] - x_means[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    // a regressor whose centered variation vanishes relative to its level is
    // collinear with the intercept
    for a in 0..p {
        let level = x[a].iter().map(|v| v * v).sum::<f64>();
        if !(xtx[(a, a)] > level * 1e-24) {
            return None;
        }
    }
    let coefs = if p == 0 {
        DVector::zeros(0)
    } else {
        spd_solve_vec(&xtx, &xty)?
    };
    let intercept = y_mean - (0..p).map(|a| coefs[a] * x_means[a]).sum::<f64>();
    let residuals: Vec<f64> = (0..n)
        .map(|t| {
            y[t] - y_mean
                - (0..p)
                    .map(|a| coefs[a] * (x[a][t] - x_means[a]))
                    .sum::<f64>()
        })
        .collect();
    let rss = residuals.iter().map(|r| r * r).sum();
    Some(OlsFit {
        intercept,
        coefs: coefs.iter().copied().collect(),
        residuals,
        rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_recovers_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve_vec(&a, &b).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_solve_vec(&a, &DVector::from_vec(vec![1.0, 1.0])).is_none());
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(spd_solve_vec(&z, &DVector::from_vec(vec![1.0, 1.0])).is_none());
    }

    #[test]
    fn spectral_radius_of_permutation() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((spectral_radius(&w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let fit = ols_with_intercept(&y, &[x]).unwrap();
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!((fit.coefs[0] - 0.5).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn ols_constant_regressor_is_singular() {
        let y = vec![1.0, 2.0, 3.0];
        assert!(ols_with_intercept(&y, &[vec![5.0; 3]]).is_none());
    }
}
