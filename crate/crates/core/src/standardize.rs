//! Regular and hierarchical standardization of second-order designs.
//!
//! Regular standardization expands the design first and then centers and
//! scales every column on its own. Hierarchical standardization only
//! centers and scales the main effects, then builds squares and products
//! from the standardized mains. Mapping the fitted coefficients back to the
//! raw scale is where the two differ: under the hierarchical scheme every
//! nonzero second-order coefficient leaks into its parents' main-effect
//! coefficients through the centers, which is what forces strong heredity.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terms::{expand, expand_matrix, RawDesign, TermId, TermSet};

/// Centers below this magnitude are treated as exactly zero and shifted.
pub const ZERO_CENTER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Estimator {
    /// Sample mean and sample standard deviation (n - 1 denominator).
    #[default]
    MeanSD,
    /// Median and inter-quartile range (type-7 quantiles).
    MedianIQR,
}

/// How large a shift to apply to a main effect whose center is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaRule {
    /// `delta = factor * scale_j`.
    RelativeToScale(f64),
    Absolute(f64),
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::RelativeToScale(1e-3)
    }
}

impl DeltaRule {
    fn delta_for(&self, scale: f64) -> f64 {
        match *self {
            DeltaRule::RelativeToScale(f) => f * scale,
            DeltaRule::Absolute(d) => d,
        }
    }
}

/// Per-main-effect location and scale.
///
/// `centers` are the raw estimates; the center actually used for
/// standardization is `centers[j] - delta_applied[j]`, i.e. the column is
/// treated as if it had been shifted by `+delta_applied[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationScale {
    pub estimator: Estimator,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub delta_applied: Vec<f64>,
}

impl LocationScale {
    /// Builds and validates a location-scale record.
    pub fn new(
        estimator: Estimator,
        centers: Vec<f64>,
        scales: Vec<f64>,
        delta_applied: Vec<f64>,
    ) -> Result<LocationScale> {
        let ls = LocationScale {
            estimator,
            centers,
            scales,
            delta_applied,
        };
        ls.validate()?;
        Ok(ls)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.centers.len();
        if p == 0 || self.scales.len() != p || self.delta_applied.len() != p {
            return Err(Error::InconsistentParams(format!(
                "location-scale lengths differ or are empty: centers {}, scales {}, delta_applied {}",
                p,
                self.scales.len(),
                self.delta_applied.len()
            )));
        }
        for j in 0..p {
            let (c, s, d) = (self.centers[j], self.scales[j], self.delta_applied[j]);
            if !c.is_finite() || !d.is_finite() {
                return Err(Error::InconsistentParams(format!("non-finite center for X{}", j + 1)));
            }
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InconsistentParams(format!(
                    "scale for X{} must be positive, got {s}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.centers.len()
    }

    /// Center used for standardization and back-transformation.
    pub fn effective_center(&self, j: usize) -> f64 {
        self.centers[j] - self.delta_applied[j]
    }

    /// Standardized main effects `(x_j - c_j) / s_j`.
    pub fn apply(&self, raw: &RawDesign) -> Result<DMatrix<f64>> {
        if raw.p() != self.p() {
            return Err(Error::InvalidDimension(format!(
                "location-scale fitted on {} columns, design has {}",
                self.p(),
                raw.p()
            )));
        }
        let mut z = raw.values().clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (c, s) = (self.effective_center(j), self.scales[j]);
            col.apply(|v| *v = (*v - c) / s);
        }
        Ok(z)
    }
}

/// Type-7 (linear interpolation) quantile of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn location_scale_of(values: &[f64], estimator: Estimator) -> (f64, f64) {
    match estimator {
        Estimator::MeanSD => mean_sd(values.iter().copied()),
        Estimator::MedianIQR => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = quantile_sorted(&sorted, 0.5);
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            (median, iqr)
        }
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// Estimates center and scale for each main effect, shifting zero centers.
pub fn fit_location_scale(raw: &RawDesign, estimator: Estimator, delta: DeltaRule) -> Result<LocationScale> {
    let p = raw.p();
    let mut centers = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    let mut delta_applied = Vec::with_capacity(p);
    for (j, col) in raw.values().column_iter().enumerate() {
        let values: Vec<f64> = col.iter().copied().collect();
        let degenerate = |reason: &str| Error::DegenerateColumn {
            column: raw.column_name(j),
            reason: reason.to_string(),
        };
        if values.len() < 2 {
            return Err(degenerate("needs at least two rows to estimate spread"));
        }
        if is_constant(&values) {
            return Err(degenerate("column is constant"));
        }
        let (center, scale) = location_scale_of(&values, estimator);
        if !(scale.is_finite() && scale > 0.0) {
            let what = match estimator {
                Estimator::MeanSD => "standard deviation is zero",
                Estimator::MedianIQR => "inter-quartile range is zero",
            };
            return Err(degenerate(what));
        }
        let shift = if center.abs() < ZERO_CENTER_TOL {
            let d = delta.delta_for(scale);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::InvalidOptions(format!(
                    "delta shift must be nonzero and finite, got {d}"
                )));
            }
            d
        } else {
            0.0
        };
        centers.push(center);
        scales.push(scale);
        delta_applied.push(shift);
    }
    Ok(LocationScale {
        estimator,
        centers,
        scales,
        delta_applied,
    })
}

/// Standardizes the mains and builds second-order columns from them.
pub fn standardize_hierarchical(raw: &RawDesign, ls: &LocationScale, terms: &TermSet) -> Result<DMatrix<f64>> {
    if terms.p() != raw.p() {
        return Err(Error::InvalidDimension(format!(
            "term set is over p = {} but the design has {} columns",
            terms.p(),
            raw.p()
        )));
    }
    let z = ls.apply(raw)?;
    Ok(expand_matrix(&z, terms))
}

/// Per-column centers and scales of an independently standardized expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularParams {
    pub estimator: Estimator,
    pub terms: Vec<TermId>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub delta_applied: Vec<f64>,
}

impl RegularParams {
    pub fn validate(&self) -> Result<()> {
        let m = self.terms.len();
        if self.centers.len() != m || self.scales.len() != m || self.delta_applied.len() != m {
            return Err(Error::InconsistentParams(format!(
                "regular params lengths differ: terms {m}, centers {}, scales {}, delta_applied {}",
                self.centers.len(),
                self.scales.len(),
                self.delta_applied.len()
            )));
        }
        for (t, (c, s)) in self.terms.iter().zip(self.centers.iter().zip(&self.scales)) {
            if !c.is_finite() || !(s.is_finite() && *s > 0.0) {
                return Err(Error::InconsistentParams(format!("bad center/scale for {t}")));
            }
        }
        Ok(())
    }

    fn lookup(&self, t: TermId) -> Option<(f64, f64)> {
        self.terms
            .iter()
            .position(|x| *x == t)
            .map(|i| (self.centers[i], self.scales[i]))
    }

    /// Standardizes a new design (e.g. validation rows) with these parameters.
    pub fn apply(&self, raw: &RawDesign, terms: &TermSet) -> Result<DMatrix<f64>> {
        let mut x = expand(raw, terms)?;
        for (c, t) in terms.iter().enumerate() {
            let (center, scale) = self
                .lookup(*t)
                .ok_or_else(|| Error::InconsistentParams(format!("no regular params for {t}")))?;
            x.column_mut(c).apply(|v| *v = (*v - center) / scale);
        }
        Ok(x)
    }
}

/// Expands, then centers and scales every column to mean 0, SD 1.
pub fn standardize_regular(raw: &RawDesign, terms: &TermSet) -> Result<(DMatrix<f64>, RegularParams)> {
    let mut x = expand(raw, terms)?;
    let mut centers = Vec::with_capacity(terms.len());
    let mut scales = Vec::with_capacity(terms.len());
    for (c, t) in terms.iter().enumerate() {
        let values: Vec<f64> = x.column(c).iter().copied().collect();
        let name = match (t, raw.names()) {
            (TermId::Main(j), Some(_)) => raw.column_name(*j),
            _ => t.label(),
        };
        if values.len() < 2 || is_constant(&values) {
            return Err(Error::DegenerateColumn {
                column: name,
                reason: "expanded column is constant".into(),
            });
        }
        let (mean, sd) = mean_sd(values.iter().copied());
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::DegenerateColumn {
                column: name,
                reason: "standard deviation is zero".into(),
            });
        }
        x.column_mut(c).apply(|v| *v = (*v - mean) / sd);
        centers.push(mean);
        scales.push(sd);
    }
    let params = RegularParams {
        estimator: Estimator::MeanSD,
        terms: terms.terms().to_vec(),
        delta_applied: vec![0.0; centers.len()],
        centers,
        scales,
    };
    Ok((x, params))
}

/// Scale on which a coefficient vector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleTag {
    Raw,
    RegularStd,
    HierStd,
}

impl ScaleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleTag::Raw => "Raw",
            ScaleTag::RegularStd => "RegularStd",
            ScaleTag::HierStd => "HierStd",
        }
    }
}

/// Intercept plus one coefficient per term of a [`TermSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    intercept: f64,
    terms: TermSet,
    values: Vec<f64>,
    scale_tag: ScaleTag,
}

impl CoefficientVector {
    pub fn new(terms: TermSet, intercept: f64, values: Vec<f64>, scale_tag: ScaleTag) -> Result<Self> {
        if values.len() != terms.len() {
            return Err(Error::InvalidDimension(format!(
                "{} coefficients for {} terms",
                values.len(),
                terms.len()
            )));
        }
        Ok(CoefficientVector {
            intercept,
            terms,
            values,
            scale_tag,
        })
    }

    pub fn zeros(terms: TermSet, scale_tag: ScaleTag) -> Self {
        let values = vec![0.0; terms.len()];
        CoefficientVector {
            intercept: 0.0,
            terms,
            values,
            scale_tag,
        }
    }

    /// Builds a vector from `(term, value)` pairs; absent terms are zero.
    pub fn from_pairs(
        terms: TermSet,
        intercept: f64,
        pairs: impl IntoIterator<Item = (TermId, f64)>,
        scale_tag: ScaleTag,
    ) -> Result<Self> {
        let mut v = CoefficientVector::zeros(terms, scale_tag);
        v.intercept = intercept;
        for (t, x) in pairs {
            v.set(t, x)?;
        }
        Ok(v)
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn terms(&self) -> &TermSet {
        &self.terms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale_tag(&self) -> ScaleTag {
        self.scale_tag
    }

    pub fn get(&self, t: TermId) -> Option<f64> {
        self.terms.index_of(t).map(|i| self.values[i])
    }

    /// Coefficient of `t`, or zero when the term is not in the set.
    pub fn value_or_zero(&self, t: TermId) -> f64 {
        self.get(t).unwrap_or(0.0)
    }

    pub fn set(&mut self, t: TermId, value: f64) -> Result<()> {
        let i = self
            .terms
            .index_of(t)
            .ok_or_else(|| Error::InvalidDimension(format!("term {t} is not in the coefficient's term set")))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, f64)> + '_ {
        self.terms.iter().copied().zip(self.values.iter().copied())
    }

    /// Terms with a coefficient that is not exactly zero.
    pub fn selected(&self) -> BTreeSet<TermId> {
        self.iter().filter(|(_, v)| *v != 0.0).map(|(t, _)| t).collect()
    }

    /// Predictions for an already expanded (and, if needed, standardized) matrix.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.values.len() {
            return Err(Error::InvalidDimension(format!(
                "matrix has {} columns, model has {} terms",
                x.ncols(),
                self.values.len()
            )));
        }
        let b = DVector::from_column_slice(&self.values);
        Ok((x * b).add_scalar(self.intercept))
    }

    /// Raw-scale predictions straight from main effects.
    pub fn predict_raw(&self, raw: &RawDesign) -> Result<DVector<f64>> {
        if self.scale_tag != ScaleTag::Raw {
            return Err(Error::InconsistentParams(format!(
                "predict_raw needs raw-scale coefficients, got {}",
                self.scale_tag.as_str()
            )));
        }
        self.predict(&expand(raw, &self.terms)?)
    }

    /// Writes `term,value,scale_tag` rows, intercept first.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let tag = self.scale_tag.as_str();
        let wrap = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["term", "value", "scale_tag"]).map_err(wrap)?;
        out.write_record(["(Intercept)", &format!("{:e}", self.intercept), tag])
            .map_err(wrap)?;
        for (t, v) in self.iter() {
            out.write_record([t.label(), format!("{v:e}"), tag.to_string()])
                .map_err(wrap)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn require_tag(c: &CoefficientVector, tag: ScaleTag) -> Result<()> {
    if c.scale_tag != tag {
        return Err(Error::InconsistentParams(format!(
            "expected {} coefficients, got {}",
            tag.as_str(),
            c.scale_tag.as_str()
        )));
    }
    Ok(())
}

/// Maps hierarchically standardized coefficients back to the raw scale.
///
/// With centers `c` and scales `s`:
///
/// ```text
/// beta_j    = b~_j / s_j^2
/// gamma_jk  = g~_jk / (s_j s_k)
/// alpha_j   = a~_j / s_j - 2 c_j b~_j / s_j^2 - sum_{k != j} c_k g~_jk / (s_j s_k)
/// intercept = e~ - sum a~_j c_j / s_j + sum b~_j c_j^2 / s_j^2 + sum g~_jk c_j c_k / (s_j s_k)
/// ```
///
/// The result is defined on the heredity closure of the input terms, so a
/// parent main effect always has a slot even when it was not a candidate.
pub fn back_transform_hierarchical(std_coefs: &CoefficientVector, ls: &LocationScale) -> Result<CoefficientVector> {
    require_tag(std_coefs, ScaleTag::HierStd)?;
    let terms = std_coefs.terms();
    if terms.p() != ls.p() {
        return Err(Error::InconsistentParams(format!(
            "coefficients are over p = {} but location-scale has {} columns",
            terms.p(),
            ls.p()
        )));
    }
    let c = |j: usize| ls.effective_center(j);
    let s = |j: usize| ls.scales[j];

    let mut out = CoefficientVector::zeros(terms.heredity_closure(), ScaleTag::Raw);
    let mut intercept = std_coefs.intercept();
    let mut main_adjust = vec![0.0; ls.p()];
    for (t, v) in std_coefs.iter() {
        match t {
            TermId::Main(j) => {
                main_adjust[j] += v / s(j);
                intercept -= v * c(j) / s(j);
            }
            TermId::Quad(j) => {
                let s2 = s(j) * s(j);
                out.set(t, v / s2)?;
                main_adjust[j] -= 2.0 * c(j) * v / s2;
                intercept += v * c(j) * c(j) / s2;
            }
            TermId::Inter(j, k) => {
                let sjk = s(j) * s(k);
                out.set(t, v / sjk)?;
                main_adjust[j] -= c(k) * v / sjk;
                main_adjust[k] -= c(j) * v / sjk;
                intercept += v * c(j) * c(k) / sjk;
            }
        }
    }
    for (j, adj) in main_adjust.into_iter().enumerate() {
        if out.terms().contains(TermId::Main(j)) {
            out.set(TermId::Main(j), adj)?;
        }
    }
    out.intercept = intercept;
    Ok(out)
}

/// Maps regularly standardized coefficients back to the raw scale.
///
/// Slopes are divided by their own column scale; the intercept absorbs the
/// centers so fitted values are unchanged.
pub fn back_transform_regular(std_coefs: &CoefficientVector, params: &RegularParams) -> Result<CoefficientVector> {
    require_tag(std_coefs, ScaleTag::RegularStd)?;
    let mut out = CoefficientVector::zeros(std_coefs.terms().clone(), ScaleTag::Raw);
    let mut intercept = std_coefs.intercept();
    for (t, v) in std_coefs.iter() {
        let (center, scale) = params
            .lookup(t)
            .ok_or_else(|| Error::InconsistentParams(format!("no regular params for {t}")))?;
        out.set(t, v / scale)?;
        intercept -= v * center / scale;
    }
    out.intercept = intercept;
    Ok(out)
}

/// Outcome of a strong-heredity check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeredityReport {
    pub satisfied: bool,
    pub violators: Vec<TermId>,
}

/// Every nonzero second-order term must have all parent mains nonzero.
pub fn check_heredity(coefs: &CoefficientVector) -> HeredityReport {
    let violators: Vec<TermId> = coefs
        .iter()
        .filter(|(t, v)| t.is_second_order() && *v != 0.0)
        .filter(|(t, _)| {
            t.parents()
                .into_iter()
                .any(|j| coefs.value_or_zero(TermId::Main(j)) == 0.0)
        })
        .map(|(t, _)| t)
        .collect();
    HeredityReport {
        satisfied: violators.is_empty(),
        violators,
    }
}

/// Parameters of either scheme, tagged for JSON interchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum StandardizationParams {
    Hierarchical(LocationScale),
    Regular(RegularParams),
}

impl StandardizationParams {
    /// Parses and validates a params document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let params: StandardizationParams = serde_json::from_slice(bytes)?;
        match &params {
            StandardizationParams::Hierarchical(ls) => ls.validate()?,
            StandardizationParams::Regular(rp) => rp.validate()?,
        }
        Ok(params)
    }
}
