//! L1-penalized least squares by cyclic coordinate descent with
//! soft-thresholding, in covariance form.
//!
//! Minimizes `(1/n) * sum_t (y_t - theta' x_t)^2 + lambda * |theta|_1` to a
//! KKT tolerance; the support of the minimizer is what the structure learner
//! reports as a parent set.

use crate::error::{Error, Result};

/// Solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct LassoSettings {
    /// Maximum allowed KKT residual at the returned solution.
    pub tol: f64,
    /// Cap on full coordinate-descent sweeps.
    pub max_iter: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// One penalized regression: `design` holds `n` rows of length `p`.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub lambda: f64,
    pub settings: LassoSettings,
}

impl LassoProblem {
    pub fn new(design: Vec<Vec<f64>>, response: Vec<f64>, lambda: f64) -> Result<Self> {
        if design.len() != response.len() || design.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "design has {} rows but response has {}",
                design.len(),
                response.len()
            )));
        }
        let p = design[0].len();
        if design.iter().any(|row| row.len() != p) {
            return Err(Error::InvalidParameter("ragged design matrix".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(LassoProblem {
            design,
            response,
            lambda,
            settings: LassoSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: LassoSettings) -> Self {
        self.settings = settings;
        self
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Maximum KKT residual of `theta`: for zero coordinates the overshoot of the
/// smooth gradient beyond `lambda`, for active coordinates the stationarity
/// defect `|grad_j + lambda * sign(theta_j)|`.
pub fn kkt_residual(gram: &[Vec<f64>], cross: &[f64], lambda: f64, theta: &[f64]) -> f64 {
    let p = theta.len();
    let mut worst = 0.0f64;
    for j in 0..p {
        let qj: f64 = (0..p).map(|k| gram[j][k] * theta[k]).sum();
        let grad = 2.0 * (qj - cross[j]);
        let defect = if theta[j] == 0.0 {
            (grad.abs() - lambda).max(0.0)
        } else {
            (grad + lambda * theta[j].signum()).abs()
        };
        worst = worst.max(defect);
    }
    worst
}

/// Solves the problem, returning the coefficient vector; exact zeros mark
/// coordinates outside the support.
pub fn lasso_fit(problem: &LassoProblem) -> Result<Vec<f64>> {
    let n = problem.design.len();
    let p = problem.design[0].len();
    if p == 0 {
        return Ok(Vec::new());
    }
    let inv_n = 1.0 / n as f64;

    // gram = X'X / n, cross = X'y / n.
    let mut gram = vec![vec![0.0; p]; p];
    let mut cross = vec![0.0; p];
    for (row, &y) in problem.design.iter().zip(&problem.response) {
        for j in 0..p {
            let xj = row[j];
            if xj == 0.0 {
                continue;
            }
            cross[j] += xj * y;
            for (slot, &xk) in gram[j][j..].iter_mut().zip(&row[j..]) {
                *slot += xj * xk;
            }
        }
    }
    for j in 0..p {
        cross[j] *= inv_n;
        // Symmetric mirror write; the index is load-bearing here.
        #[allow(clippy::needless_range_loop)]
        for k in j..p {
            let scaled = gram[j][k] * inv_n;
            gram[j][k] = scaled;
            gram[k][j] = scaled;
        }
    }

    let lambda = problem.lambda;
    let half_lambda = 0.5 * lambda;
    let mut theta = vec![0.0; p];
    // q = gram * theta, maintained incrementally.
    let mut q = vec![0.0; p];

    for sweep in 0..problem.settings.max_iter {
        for j in 0..p {
            let gjj = gram[j][j];
            if gjj <= 0.0 {
                continue; // all-zero column, coefficient stays 0
            }
            // Partial correlation of column j with the residual that excludes j.
            let rho = cross[j] - q[j] + gjj * theta[j];
            let updated = soft_threshold(rho, half_lambda) / gjj;
            let delta = updated - theta[j];
            if delta != 0.0 {
                for (qk, gram_row) in q.iter_mut().zip(&gram) {
                    *qk += gram_row[j] * delta;
                }
                theta[j] = updated;
            }
        }
        let residual = kkt_residual(&gram, &cross, lambda, &theta);
        if residual <= problem.settings.tol {
            return Ok(theta);
        }
        if sweep + 1 == problem.settings.max_iter {
            return Err(Error::SolverDidNotConverge {
                iterations: sweep + 1,
                residual,
            });
        }
    }
    unreachable!("loop either returns or errors at the cap")
}

/// Penalty from the exploration analysis:
/// `lambda = m * sqrt(2 * ln(4 * N * |An(i)| / delta) / n_obs)`.
pub fn lasso_lambda(m: f64, node_count: usize, ancestor_count: usize, delta: f64, n_obs: usize) -> f64 {
    assert!(ancestor_count > 0 && n_obs > 0);
    m * (2.0 * ((4.0 * node_count as f64 * ancestor_count as f64) / delta).ln() / n_obs as f64)
        .sqrt()
}
