//! Bidirectional stepwise selection by AIC.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::{center_columns, check_xy, column_means, ols_fit};
use super::{FitResult, Tuning};
use crate::error::{Error, Result};

/// RSS is floored at this fraction of the total sum of squares so that
/// exact fits keep a finite AIC.
const RSS_FLOOR: f64 = 1e-12;
/// Cholesky pivots smaller than this fraction of the diagonal mark a
/// candidate model as collinear.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StepwiseStart {
    #[default]
    FullModel,
    NullModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StepwiseOptions {
    pub start: StepwiseStart,
    /// Largest model (in slopes) the search may reach; `None` means n - 1.
    pub max_selected: Option<usize>,
}

/// `n ln(RSS / n) + 2 k`, with `k` counting the intercept.
pub fn aic(n: usize, rss: f64, n_params: usize, tss: f64) -> f64 {
    let floor = (tss * RSS_FLOOR).max(f64::MIN_POSITIVE);
    let n = n as f64;
    n * (rss.max(floor) / n).ln() + 2.0 * n_params as f64
}

struct Gram {
    n: usize,
    g: DMatrix<f64>,
    c: DVector<f64>,
    tss: f64,
}

impl Gram {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Gram {
        let xc = center_columns(x, &column_means(x));
        let yc = y.add_scalar(-y.mean());
        Gram {
            n: x.nrows(),
            g: xc.transpose() * &xc,
            c: xc.transpose() * &yc,
            tss: yc.norm_squared(),
        }
    }

    /// Residual sum of squares of the model on `cols`; `None` if collinear.
    fn rss(&self, cols: &[usize]) -> Option<f64> {
        if cols.is_empty() {
            return Some(self.tss);
        }
        let k = cols.len();
        let sub = DMatrix::from_fn(k, k, |a, b| self.g[(cols[a], cols[b])]);
        let rhs = DVector::from_fn(k, |a, _| self.c[cols[a]]);
        let chol = Cholesky::new(sub)?;
        let l = chol.l_dirty();
        for (a, &col) in cols.iter().enumerate() {
            let d = l[(a, a)];
            if d.is_nan() || d * d <= PIVOT_TOL * self.g[(col, col)] {
                return None;
            }
        }
        let sol = chol.solve(&rhs);
        Some((self.tss - rhs.dot(&sol)).max(0.0))
    }

    fn aic(&self, cols: &[usize]) -> Option<f64> {
        self.rss(cols).map(|rss| aic(self.n, rss, cols.len() + 1, self.tss))
    }
}

/// Greedy add/drop search minimizing AIC.
///
/// Each step scores every single-column addition and deletion and takes the
/// best one; it stops when no move lowers the AIC. Ties go to the move on
/// the lowest column index.
pub fn stepwise_aic(x: &DMatrix<f64>, y: &DVector<f64>, opts: &StepwiseOptions) -> Result<FitResult> {
    check_xy(x, y)?;
    let (n, m) = x.shape();
    if n < 2 {
        return Err(Error::InvalidDimension("stepwise needs at least two rows".into()));
    }
    let max_selected = opts.max_selected.unwrap_or(n - 1);
    if max_selected == 0 {
        return Err(Error::InvalidOptions("max_selected must be at least 1".into()));
    }
    let gram = Gram::new(x, y);

    let mut in_model = vec![false; m];
    if opts.start == StepwiseStart::FullModel {
        if n <= m + 1 {
            return Err(Error::InfeasibleStart { n, columns: m });
        }
        in_model.fill(true);
    }
    let cols_of = |mask: &[bool]| -> Vec<usize> { (0..m).filter(|&j| mask[j]).collect() };

    let mut current = gram
        .aic(&cols_of(&in_model))
        .ok_or_else(|| Error::SingularDesign("starting model is collinear".into()))?;
    let mut trace = vec![current];
    let mut steps = 0;
    loop {
        let size = in_model.iter().filter(|b| **b).count();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            if !in_model[j] && size >= max_selected {
                continue;
            }
            in_model[j] = !in_model[j];
            let score = gram.aic(&cols_of(&in_model));
            in_model[j] = !in_model[j];
            if let Some(score) = score {
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((j, score));
                }
            }
        }
        match best {
            Some((j, score)) if score < current => {
                in_model[j] = !in_model[j];
                current = score;
                trace.push(score);
                steps += 1;
            }
            _ => break,
        }
    }

    let cols = cols_of(&in_model);
    let fit = ols_fit(&x.select_columns(&cols), y)?;
    let mut coefs = vec![0.0; m];
    for (b, &j) in fit.coefs.iter().zip(&cols) {
        coefs[j] = *b;
    }
    Ok(FitResult {
        intercept: fit.intercept,
        coefs,
        tuning: Tuning::Aic(aic(n, fit.rss, cols.len() + 1, gram.tss)),
        iterations: steps,
        converged: true,
        trace,
    })
}
