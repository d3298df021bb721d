//! Evaluation quantities for selected models: heredity maintenance,
//! sensitivity, specificity, prediction error, and signal-to-noise ratio.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulation::XDistribution;
use crate::terms::{canonical_terms, TermClass, TermId, TermSet};

/// The generating model of a simulation: nonzero coefficients, the ambient
/// term set they are drawn from, and the noise SD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthSpec {
    pub terms: TermSet,
    pub coefficients: BTreeMap<TermId, f64>,
    pub sigma: f64,
}

impl TruthSpec {
    /// Truth over the full second-order term set of `p` mains.
    pub fn new(p: usize, coefficients: BTreeMap<TermId, f64>, sigma: f64) -> Result<TruthSpec> {
        let terms = canonical_terms(p)?;
        if let Some(t) = coefficients.keys().find(|t| !terms.contains(**t)) {
            return Err(Error::InvalidConfig(format!(
                "active term {t} outside the {p}-main term set"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
        }
        let coefficients = coefficients.into_iter().filter(|(_, v)| *v != 0.0).collect();
        Ok(TruthSpec {
            terms,
            coefficients,
            sigma,
        })
    }

    pub fn p(&self) -> usize {
        self.terms.p()
    }

    pub fn active(&self) -> BTreeSet<TermId> {
        self.coefficients.keys().copied().collect()
    }

    pub fn is_active(&self, t: TermId) -> bool {
        self.coefficients.contains_key(&t)
    }

    /// Noise-free mean response for one row of main effects.
    pub fn signal(&self, row: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .map(|(t, c)| {
                c * match *t {
                    TermId::Main(j) => row[j],
                    TermId::Quad(j) => row[j] * row[j],
                    TermId::Inter(j, k) => row[j] * row[k],
                }
            })
            .sum()
    }
}

/// Parents required by the selected second-order terms, and how many of
/// them are selected as main effects: `(selected, required)`.
pub fn msh_counts(selected: &BTreeSet<TermId>) -> (usize, usize) {
    let required: BTreeSet<usize> = selected
        .iter()
        .filter(|t| t.is_second_order())
        .flat_map(|t| t.parents())
        .collect();
    let present = required
        .iter()
        .filter(|j| selected.contains(&TermId::Main(**j)))
        .count();
    (present, required.len())
}

/// Maintenance of strong heredity. Vacuously 1 when no second-order term
/// is selected.
pub fn msh(selected: &BTreeSet<TermId>) -> f64 {
    match msh_counts(selected) {
        (_, 0) => 1.0,
        (present, required) => present as f64 / required as f64,
    }
}

/// A ratio that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub total: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

fn sensitivity_rate<'a>(
    selected: &BTreeSet<TermId>,
    truth: &'a TruthSpec,
    filter: impl Fn(&TermId) -> bool + 'a,
) -> Rate {
    let active: Vec<TermId> = truth.coefficients.keys().copied().filter(|t| filter(t)).collect();
    Rate {
        hits: active.iter().filter(|t| selected.contains(t)).count(),
        total: active.len(),
    }
}

fn specificity_rate(selected: &BTreeSet<TermId>, truth: &TruthSpec, filter: impl Fn(&TermId) -> bool) -> Rate {
    let inactive: Vec<TermId> = truth
        .terms
        .iter()
        .copied()
        .filter(|t| filter(t) && !truth.is_active(*t))
        .collect();
    Rate {
        hits: inactive.iter().filter(|t| !selected.contains(t)).count(),
        total: inactive.len(),
    }
}

/// Fraction of truly active terms that were selected.
pub fn sensitivity(selected: &BTreeSet<TermId>, truth: &TruthSpec) -> Option<f64> {
    sensitivity_rate(selected, truth, |_| true).value()
}

/// Fraction of truly inactive terms that were left out.
pub fn specificity(selected: &BTreeSet<TermId>, truth: &TruthSpec) -> Option<f64> {
    specificity_rate(selected, truth, |_| true).value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class: TermClass,
    pub sensitivity: Rate,
    pub specificity: Rate,
}

/// Sensitivity and specificity counts restricted to each term class.
pub fn by_class(selected: &BTreeSet<TermId>, truth: &TruthSpec) -> Vec<ClassRates> {
    TermClass::ALL
        .iter()
        .map(|&class| ClassRates {
            class,
            sensitivity: sensitivity_rate(selected, truth, move |t| t.class() == class),
            specificity: specificity_rate(selected, truth, |t| t.class() == class),
        })
        .collect()
}

/// Mean squared prediction error.
pub fn mse(predictions: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if predictions.len() != y.len() || y.is_empty() {
        return Err(Error::InvalidDimension(format!(
            "{} predictions for {} responses",
            predictions.len(),
            y.len()
        )));
    }
    Ok((predictions - y).norm_squared() / y.len() as f64)
}

/// Raw moment `E[X^k]` of one main effect.
fn raw_moment(dist: XDistribution, k: u32) -> f64 {
    match dist {
        // (k - 1)!! for even k, zero for odd k
        XDistribution::StandardNormal => {
            if k % 2 == 1 {
                0.0
            } else {
                (1..k).step_by(2).map(f64::from).product()
            }
        }
        XDistribution::LogNormal01 => (0.5 * f64::from(k * k)).exp(),
    }
}

fn exponents(t: TermId, p: usize) -> Vec<u32> {
    let mut e = vec![0; p];
    match t {
        TermId::Main(j) => e[j] = 1,
        TermId::Quad(j) => e[j] = 2,
        TermId::Inter(j, k) => {
            e[j] = 1;
            e[k] = 1;
        }
    }
    e
}

/// Exact `Var(signal) / sigma^2` for independent mains.
///
/// Every term is a monomial, so `E[T_a T_b]` factors into per-main raw
/// moments and the variance follows from `E[f^2] - E[f]^2`.
pub fn snr(truth: &TruthSpec, dist: XDistribution) -> f64 {
    let p = truth.p();
    let terms: Vec<(Vec<u32>, f64)> = truth.coefficients.iter().map(|(t, c)| (exponents(*t, p), *c)).collect();
    let moment = |a: &[u32], b: &[u32]| -> f64 { a.iter().zip(b).map(|(x, y)| raw_moment(dist, x + y)).product() };
    let zero = vec![0; p];
    let mean: f64 = terms.iter().map(|(e, c)| c * moment(e, &zero)).sum();
    let second: f64 = terms
        .iter()
        .flat_map(|(ea, ca)| terms.iter().map(move |(eb, cb)| ca * cb * moment(ea, eb)))
        .sum();
    (second - mean * mean).max(0.0) / (truth.sigma * truth.sigma)
}

/// Monte Carlo estimate of the SNR with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSnr {
    pub value: f64,
    pub std_error: f64,
}

/// Seeded Monte Carlo SNR from `draws` independent rows. Useful for
/// distributions whose high moments make [`snr`] hard to trust by eye; note
/// the standard error is itself unreliable for heavy-tailed signals.
pub fn snr_monte_carlo(truth: &TruthSpec, dist: XDistribution, draws: usize, seed: u64) -> Result<MonteCarloSnr> {
    if draws < 2 {
        return Err(Error::InvalidOptions("Monte Carlo SNR needs at least two draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = truth.p();
    let mut row = vec![0.0; p];
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = dist.transform(z);
            }
            truth.signal(&row)
        })
        .collect();
    let n = draws as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se_var = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    let s2 = truth.sigma * truth.sigma;
    Ok(MonteCarloSnr {
        value: var / s2,
        std_error: se_var / s2,
    })
}

/// Mean, median and standard error (SD / sqrt(R)) over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub se: f64,
    pub count: usize,
}

/// `None` for an empty sample. A single value has standard error 0.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = crate::standardize::quantile_sorted(&sorted, 0.5);
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some(Summary {
        mean,
        median,
        se,
        count: values.len(),
    })
}

/// Metrics of one selected model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub msh: f64,
    pub msh_parents_selected: usize,
    pub msh_parents_required: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub mse: f64,
    pub n_selected: usize,
    pub by_class: Vec<ClassRates>,
}

impl ReplicateMetrics {
    pub fn evaluate(selected: &BTreeSet<TermId>, truth: &TruthSpec, mse: f64) -> ReplicateMetrics {
        let (present, required) = msh_counts(selected);
        ReplicateMetrics {
            msh: msh(selected),
            msh_parents_selected: present,
            msh_parents_required: required,
            sensitivity: sensitivity(selected, truth),
            specificity: specificity(selected, truth),
            mse,
            n_selected: selected.len(),
            by_class: by_class(selected, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: TermClass,
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
}

/// Replicate metrics aggregated over a campaign cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub msh: Option<Summary>,
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub mse: Option<Summary>,
    pub by_class: Vec<ClassSummary>,
}

impl MetricsReport {
    /// Aggregates in the given (replicate) order; undefined values are skipped.
    pub fn aggregate(rows: &[ReplicateMetrics]) -> MetricsReport {
        let collect = |f: &dyn Fn(&ReplicateMetrics) -> Option<f64>| -> Option<Summary> {
            summarize(&rows.iter().filter_map(f).collect::<Vec<_>>())
        };
        let by_class = TermClass::ALL
            .iter()
            .map(|&class| {
                let pick = |r: &ReplicateMetrics| r.by_class.iter().find(|c| c.class == class).copied();
                ClassSummary {
                    class,
                    sensitivity: collect(&|r| pick(r).and_then(|c| c.sensitivity.value())),
                    specificity: collect(&|r| pick(r).and_then(|c| c.specificity.value())),
                }
            })
            .collect();
        MetricsReport {
            msh: collect(&|r| Some(r.msh)),
            sensitivity: collect(&|r| r.sensitivity),
            specificity: collect(&|r| r.specificity),
            mse: collect(&|r| Some(r.mse)),
            by_class,
        }
    }
}
