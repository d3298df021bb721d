//! Cyclic coordinate-descent lasso.
//!
//! Minimizes `(1/2n) ||y - b0 - X b||^2 + lambda ||b||_1` with an
//! unpenalized intercept. With `internal_standardize` the columns are
//! centered and divided by their population standard deviation before
//! solving, the penalty applies on that internal scale, and coefficients
//! are mapped back to the input scale on return.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::{check_xy, column_means};
use super::{FitResult, Tuning};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    pub n_lambda: usize,
    /// `None` picks 1e-4 when n exceeds the column count, otherwise 1e-2.
    pub lambda_min_ratio: Option<f64>,
    /// Convergence threshold on the largest coefficient change in a full sweep.
    pub tol: f64,
    /// Cap on coordinate sweeps per lambda.
    pub max_iter: usize,
    pub internal_standardize: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            n_lambda: 100,
            lambda_min_ratio: None,
            tol: 1e-7,
            max_iter: 100_000,
            internal_standardize: true,
        }
    }
}

impl LassoOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidOptions(format!("tol must be positive, got {}", self.tol)));
        }
        if self.n_lambda == 0 {
            return Err(Error::InvalidOptions("n_lambda must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_iter must be at least 1".into()));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidOptions(format!(
                    "lambda_min_ratio must lie in (0, 1), got {r}"
                )));
            }
        }
        Ok(())
    }

    fn min_ratio(&self, n: usize, m: usize) -> f64 {
        self.lambda_min_ratio.unwrap_or(if n > m { 1e-4 } else { 1e-2 })
    }
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centered (and optionally scaled) copy of the problem.
struct Problem {
    n: usize,
    x: DMatrix<f64>,
    means: Vec<f64>,
    /// Divisor applied to each centered column; 0 marks a constant column.
    scales: Vec<f64>,
    /// `x_j' x_j / n` on the internal scale.
    col_sq: Vec<f64>,
    y: DVector<f64>,
    ymean: f64,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>, standardize: bool) -> Result<Problem> {
        check_xy(x, y)?;
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidDimension("lasso needs at least two rows".into()));
        }
        let means = column_means(x);
        let mut xs = x.clone();
        let mut scales = Vec::with_capacity(x.ncols());
        let mut col_sq = Vec::with_capacity(x.ncols());
        for (mut col, m) in xs.column_iter_mut().zip(&means) {
            col.add_scalar_mut(-m);
            let ss = col.norm_squared() / n as f64;
            if ss <= 0.0 || col.iter().all(|v| *v == 0.0) {
                col.fill(0.0);
                scales.push(0.0);
                col_sq.push(0.0);
            } else if standardize {
                let sd = ss.sqrt();
                col.unscale_mut(sd);
                scales.push(sd);
                col_sq.push(col.norm_squared() / n as f64);
            } else {
                scales.push(1.0);
                col_sq.push(ss);
            }
        }
        let ymean = y.mean();
        Ok(Problem {
            n,
            x: xs,
            means,
            scales,
            col_sq,
            y: y.add_scalar(-ymean),
            ymean,
        })
    }

    fn m(&self) -> usize {
        self.x.ncols()
    }

    fn lambda_max(&self) -> f64 {
        let n = self.n as f64;
        self.x
            .column_iter()
            .map(|c| (c.dot(&self.y) / n).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, b: &[f64], r: &DVector<f64>, lambda: f64) -> f64 {
        r.norm_squared() / (2.0 * self.n as f64) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn update(&self, j: usize, lambda: f64, b: &mut [f64], r: &mut DVector<f64>) -> f64 {
        if self.col_sq[j] == 0.0 {
            return 0.0;
        }
        let col = self.x.column(j);
        let g = col.dot(r) / self.n as f64 + self.col_sq[j] * b[j];
        let new = soft_threshold(g, lambda) / self.col_sq[j];
        let delta = new - b[j];
        if delta != 0.0 {
            r.axpy(-delta, &col, 1.0);
            b[j] = new;
        }
        delta.abs()
    }

    /// Coordinate descent from the warm start `b`, residual `r` kept in sync.
    /// Returns `(sweeps, converged)`.
    fn solve(
        &self,
        lambda: f64,
        b: &mut [f64],
        r: &mut DVector<f64>,
        opts: &LassoOptions,
        trace: &mut Vec<f64>,
    ) -> (usize, bool) {
        let mut sweeps = 0;
        while sweeps < opts.max_iter {
            let mut max_change = 0.0f64;
            for j in 0..self.m() {
                max_change = max_change.max(self.update(j, lambda, b, r));
            }
            sweeps += 1;
            trace.push(self.objective(b, r, lambda));
            if max_change <= opts.tol {
                return (sweeps, true);
            }
            // iterate on the current active set until it settles, then re-check all
            let active: Vec<usize> = (0..self.m()).filter(|&j| b[j] != 0.0).collect();
            while sweeps < opts.max_iter {
                let mut change = 0.0f64;
                for &j in &active {
                    change = change.max(self.update(j, lambda, b, r));
                }
                sweeps += 1;
                trace.push(self.objective(b, r, lambda));
                if change <= opts.tol {
                    break;
                }
            }
        }
        (sweeps, false)
    }

    fn result(&self, b: &[f64], lambda: f64, sweeps: usize, converged: bool, trace: Vec<f64>) -> FitResult {
        let coefs: Vec<f64> = b
            .iter()
            .zip(&self.scales)
            .map(|(v, s)| if *s == 0.0 || *v == 0.0 { 0.0 } else { v / s })
            .collect();
        let intercept = self.ymean - coefs.iter().zip(&self.means).map(|(c, m)| c * m).sum::<f64>();
        FitResult {
            intercept,
            coefs,
            tuning: Tuning::Lambda(lambda),
            iterations: sweeps,
            converged,
            trace,
        }
    }

    fn path(&self, opts: &LassoOptions) -> Vec<f64> {
        let lmax = self.lambda_max();
        let k = opts.n_lambda;
        if k == 1 {
            return vec![lmax];
        }
        let log_ratio = opts.min_ratio(self.n, self.m()).ln();
        (0..k)
            .map(|i| lmax * (log_ratio * i as f64 / (k - 1) as f64).exp())
            .collect()
    }
}

/// Lasso at a single penalty, started from zero.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &LassoOptions) -> Result<FitResult> {
    opts.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidOptions(format!(
            "lambda must be a nonnegative number, got {lambda}"
        )));
    }
    let prob = Problem::new(x, y, opts.internal_standardize)?;
    let mut b = vec![0.0; prob.m()];
    let mut r = prob.y.clone();
    let mut trace = Vec::new();
    let (sweeps, converged) = prob.solve(lambda, &mut b, &mut r, opts, &mut trace);
    Ok(prob.result(&b, lambda, sweeps, converged, trace))
}

/// Descending geometric grid from the smallest all-zero penalty.
pub fn lambda_path(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> Result<Vec<f64>> {
    opts.validate()?;
    let prob = Problem::new(x, y, opts.internal_standardize)?;
    Ok(prob.path(opts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
}

/// Fits every penalty on the path, each warm-started from the previous one.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> Result<LassoPath> {
    opts.validate()?;
    let prob = Problem::new(x, y, opts.internal_standardize)?;
    let lambdas = prob.path(opts);
    let mut b = vec![0.0; prob.m()];
    let mut r = prob.y.clone();
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let mut trace = Vec::new();
        let (sweeps, converged) = prob.solve(lambda, &mut b, &mut r, opts, &mut trace);
        fits.push(prob.result(&b, lambda, sweeps, converged, trace));
    }
    Ok(LassoPath { lambdas, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_index: usize,
    pub best_lambda: f64,
    pub fit: FitResult,
    pub lambdas: Vec<f64>,
    pub valid_mse: Vec<f64>,
}

/// Fits the path on the training rows and keeps the penalty with the
/// smallest validation MSE; ties go to the larger penalty.
pub fn tune_lasso(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    valid_x: &DMatrix<f64>,
    valid_y: &DVector<f64>,
    opts: &LassoOptions,
) -> Result<TuneResult> {
    check_xy(valid_x, valid_y)?;
    if valid_x.ncols() != train_x.ncols() {
        return Err(Error::InvalidDimension(format!(
            "training design has {} columns, validation has {}",
            train_x.ncols(),
            valid_x.ncols()
        )));
    }
    let path = lasso_path(train_x, train_y, opts)?;
    let valid_mse: Vec<f64> = path
        .fits
        .iter()
        .map(|f| {
            let b = DVector::from_column_slice(&f.coefs);
            let resid = valid_y - (valid_x * b).add_scalar(f.intercept);
            resid.norm_squared() / valid_y.len() as f64
        })
        .collect();
    let mut best = 0;
    for (i, mse) in valid_mse.iter().enumerate() {
        if *mse < valid_mse[best] {
            best = i;
        }
    }
    Ok(TuneResult {
        best_index: best,
        best_lambda: path.lambdas[best],
        fit: path.fits[best].clone(),
        lambdas: path.lambdas,
        valid_mse,
    })
}
