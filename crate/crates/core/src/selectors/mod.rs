//! Variable selectors that run on an already standardized design.
//!
//! Both selectors return a [`FitResult`] whose coefficients live on the
//! scale of the matrix they were given; mapping back to raw units is the
//! caller's job.

mod lasso;
mod ols;
mod stepwise;

pub use lasso::{lambda_path, lasso_fit, lasso_path, soft_threshold, tune_lasso, LassoOptions, LassoPath, TuneResult};
pub use ols::{ols_fit, OlsFit};
pub use stepwise::{aic, stepwise_aic, StepwiseOptions, StepwiseStart};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::standardize::{CoefficientVector, ScaleTag};
use crate::terms::TermSet;

/// Tuning value that produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tuning {
    Lambda(f64),
    Aic(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    /// One coefficient per input column.
    pub coefs: Vec<f64>,
    pub tuning: Tuning,
    /// Coordinate sweeps (lasso) or accepted moves (stepwise).
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep (lasso) or AIC after each accepted move,
    /// starting with the initial model (stepwise).
    pub trace: Vec<f64>,
}

impl FitResult {
    /// Attaches term identities to the coefficients.
    pub fn to_coefficients(&self, terms: &TermSet, tag: ScaleTag) -> Result<CoefficientVector> {
        CoefficientVector::new(terms.clone(), self.intercept, self.coefs.clone(), tag)
    }
}
