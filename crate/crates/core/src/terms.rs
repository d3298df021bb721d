//! Second-order model terms and design expansion.
//!
//! A [`TermId`] names one column of the full quadratic model
//! `y = η + Σ α_j x_j + Σ β_j x_j² + Σ_{j<k} γ_jk x_j x_k`.
//! Indices are zero-based; the one-based labels `X3`, `X1:X2`, `X3^2`
//! only appear when terms are printed or parsed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Identity of a model term.
///
/// The derived ordering is the canonical column order: every main effect,
/// then interactions in lexicographic `(j, k)` order, then quadratics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermId {
    Main(usize),
    Inter(usize, usize),
    Quad(usize),
}

/// Coarse class of a term, used for per-class breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermClass {
    #[serde(rename = "ME")]
    Main,
    #[serde(rename = "2FI")]
    Interaction,
    #[serde(rename = "QE")]
    Quadratic,
}

impl TermClass {
    pub const ALL: [TermClass; 3] = [TermClass::Main, TermClass::Interaction, TermClass::Quadratic];

    pub fn label(self) -> &'static str {
        match self {
            TermClass::Main => "ME",
            TermClass::Interaction => "2FI",
            TermClass::Quadratic => "QE",
        }
    }
}

impl TermId {
    /// Builds an interaction, ordering the pair. Fails when `j == k`.
    pub fn inter(j: usize, k: usize) -> Result<TermId> {
        match j.cmp(&k) {
            std::cmp::Ordering::Less => Ok(TermId::Inter(j, k)),
            std::cmp::Ordering::Greater => Ok(TermId::Inter(k, j)),
            std::cmp::Ordering::Equal => Err(Error::InvalidDimension(format!(
                "interaction needs two distinct indices, got ({j}, {k})"
            ))),
        }
    }

    pub fn class(&self) -> TermClass {
        match self {
            TermId::Main(_) => TermClass::Main,
            TermId::Inter(..) => TermClass::Interaction,
            TermId::Quad(_) => TermClass::Quadratic,
        }
    }

    pub fn is_second_order(&self) -> bool {
        !matches!(self, TermId::Main(_))
    }

    /// Main-effect indices this term is built from.
    pub fn parents(&self) -> BTreeSet<usize> {
        match *self {
            TermId::Main(j) | TermId::Quad(j) => BTreeSet::from([j]),
            TermId::Inter(j, k) => BTreeSet::from([j, k]),
        }
    }

    fn max_index(&self) -> usize {
        match *self {
            TermId::Main(j) | TermId::Quad(j) => j,
            TermId::Inter(j, k) => j.max(k),
        }
    }

    fn is_well_formed(&self) -> bool {
        match *self {
            TermId::Inter(j, k) => j < k,
            _ => true,
        }
    }

    /// One-based label, e.g. `X1:X2`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TermId::Main(j) => write!(f, "X{}", j + 1),
            TermId::Inter(j, k) => write!(f, "X{}:X{}", j + 1, k + 1),
            TermId::Quad(j) => write!(f, "X{}^2", j + 1),
        }
    }
}

fn parse_factor(s: &str) -> Result<usize> {
    let digits = s
        .strip_prefix('X')
        .ok_or_else(|| Error::Malformed(format!("term factor `{s}` must start with `X`")))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Malformed(format!("term factor `{s}` has no index")));
    }
    let one_based: usize = digits
        .parse()
        .map_err(|_| Error::Malformed(format!("term index in `{s}` out of range")))?;
    if one_based == 0 {
        return Err(Error::Malformed(format!("term labels are one-based, got `{s}`")));
    }
    Ok(one_based - 1)
}

impl FromStr for TermId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TermId> {
        if let Some(base) = s.strip_suffix("^2") {
            return Ok(TermId::Quad(parse_factor(base)?));
        }
        match s.split_once(':') {
            Some((a, b)) => {
                let (j, k) = (parse_factor(a)?, parse_factor(b)?);
                if j >= k {
                    return Err(Error::Malformed(format!(
                        "interaction `{s}` must list its factors in increasing order"
                    )));
                }
                Ok(TermId::Inter(j, k))
            }
            None => Ok(TermId::Main(parse_factor(s)?)),
        }
    }
}

impl Serialize for TermId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TermId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An ordered, duplicate-free collection of terms over `p` main effects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermSet {
    p: usize,
    terms: Vec<TermId>,
}

impl TermSet {
    /// Validates the terms against `p` and sorts them into canonical order.
    pub fn new(p: usize, mut terms: Vec<TermId>) -> Result<TermSet> {
        if p == 0 {
            return Err(Error::InvalidDimension("p must be at least 1".into()));
        }
        for t in &terms {
            if !t.is_well_formed() {
                return Err(Error::InvalidDimension(format!("malformed term {t:?}")));
            }
            if t.max_index() >= p {
                return Err(Error::InvalidDimension(format!("term {t} out of range for p = {p}")));
            }
        }
        terms.sort_unstable();
        if let Some(w) = terms.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDimension(format!("duplicate term {}", w[0])));
        }
        Ok(TermSet { p, terms })
    }

    /// Main effects only (the first-order model).
    pub fn mains(p: usize) -> Result<TermSet> {
        TermSet::new(p, (0..p).map(TermId::Main).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TermId> {
        self.terms.iter()
    }

    pub fn index_of(&self, t: TermId) -> Option<usize> {
        self.terms.binary_search(&t).ok()
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.index_of(t).is_some()
    }

    /// Adds the parent main effect of every second-order term.
    pub fn heredity_closure(&self) -> TermSet {
        let mut all: BTreeSet<TermId> = self.terms.iter().copied().collect();
        for t in &self.terms {
            all.extend(t.parents().into_iter().map(TermId::Main));
        }
        TermSet {
            p: self.p,
            terms: all.into_iter().collect(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(TermId::label).collect()
    }
}

impl<'a> IntoIterator for &'a TermSet {
    type Item = &'a TermId;
    type IntoIter = std::slice::Iter<'a, TermId>;

    fn into_iter(self) -> Self::IntoIter {
        self.terms.iter()
    }
}

/// Full second-order term set: `2p + p(p-1)/2` terms in canonical order.
pub fn canonical_terms(p: usize) -> Result<TermSet> {
    if p == 0 {
        return Err(Error::InvalidDimension("p must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(2 * p + p * (p - 1) / 2);
    terms.extend((0..p).map(TermId::Main));
    for j in 0..p {
        terms.extend((j + 1..p).map(|k| TermId::Inter(j, k)));
    }
    terms.extend((0..p).map(TermId::Quad));
    Ok(TermSet { p, terms })
}

/// Raw main-effect matrix, `n` rows by `p` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDesign {
    values: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl RawDesign {
    pub fn new(values: DMatrix<f64>) -> Result<RawDesign> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "raw design must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (n, _) = values.shape();
            return Err(Error::InvalidDimension(format!(
                "non-finite entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(RawDesign { values, names: None })
    }

    /// Builds a design from row-major data.
    pub fn from_rows(n: usize, p: usize, data: &[f64]) -> Result<RawDesign> {
        if data.len() != n * p {
            return Err(Error::InvalidDimension(format!(
                "expected {} values for {n}x{p}, got {}",
                n * p,
                data.len()
            )));
        }
        RawDesign::new(DMatrix::from_row_slice(n, p, data))
    }

    /// Attaches display names for the columns (e.g. CSV headers).
    pub fn with_names(mut self, names: Vec<String>) -> Result<RawDesign> {
        if names.len() != self.p() {
            return Err(Error::InvalidDimension(format!(
                "{} names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Display name of column `j`: the attached name, or the `X{j+1}` label.
    pub fn column_name(&self, j: usize) -> String {
        match &self.names {
            Some(names) => names[j].clone(),
            None => TermId::Main(j).label(),
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<RawDesign> {
        let values = self.values.select_rows(rows);
        let mut out = RawDesign::new(values)?;
        out.names = self.names.clone();
        Ok(out)
    }
}

/// Expands raw main effects into the columns named by `terms`.
pub fn expand(raw: &RawDesign, terms: &TermSet) -> Result<DMatrix<f64>> {
    if terms.p() != raw.p() {
        return Err(Error::InvalidDimension(format!(
            "term set is over p = {} but the design has {} columns",
            terms.p(),
            raw.p()
        )));
    }
    Ok(expand_matrix(raw.values(), terms))
}

pub(crate) fn expand_matrix(x: &DMatrix<f64>, terms: &TermSet) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, terms.len());
    for (c, t) in terms.iter().enumerate() {
        let mut col = out.column_mut(c);
        match *t {
            TermId::Main(j) => col.copy_from(&x.column(j)),
            TermId::Quad(j) => {
                for (o, v) in col.iter_mut().zip(x.column(j).iter()) {
                    *o = v * v;
                }
            }
            TermId::Inter(j, k) => {
                for ((o, a), b) in col.iter_mut().zip(x.column(j).iter()).zip(x.column(k).iter()) {
                    *o = a * b;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_terms_small() {
        assert_eq!(canonical_terms(1).unwrap().terms(), &[TermId::Main(0), TermId::Quad(0)]);
        let t3 = canonical_terms(3).unwrap();
        assert_eq!(
            t3.terms(),
            &[
                TermId::Main(0),
                TermId::Main(1),
                TermId::Main(2),
                TermId::Inter(0, 1),
                TermId::Inter(0, 2),
                TermId::Inter(1, 2),
                TermId::Quad(0),
                TermId::Quad(1),
                TermId::Quad(2),
            ]
        );
    }

    #[test]
    fn canonical_terms_p10_has_65() {
        let t = canonical_terms(10).unwrap();
        assert_eq!(t.len(), 65);
        let count = |c: TermClass| t.iter().filter(|x| x.class() == c).count();
        assert_eq!(count(TermClass::Main), 10);
        assert_eq!(count(TermClass::Interaction), 45);
        assert_eq!(count(TermClass::Quadratic), 10);
        // mains occupy the first 10 columns, quadratics the last 10
        assert!(t.terms()[..10].iter().all(|x| matches!(x, TermId::Main(_))));
        assert!(t.terms()[55..].iter().all(|x| matches!(x, TermId::Quad(_))));
    }

    #[test]
    fn canonical_terms_rejects_zero() {
        assert!(matches!(canonical_terms(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn parents_of_each_kind() {
        assert_eq!(TermId::Main(4).parents(), BTreeSet::from([4]));
        assert_eq!(TermId::Quad(2).parents(), BTreeSet::from([2]));
        assert_eq!(TermId::Inter(1, 3).parents(), BTreeSet::from([1, 3]));
    }

    #[test]
    fn labels_round_trip() {
        for t in canonical_terms(12).unwrap().iter() {
            assert_eq!(t.label().parse::<TermId>().unwrap(), *t);
        }
        assert_eq!(TermId::Inter(0, 1).label(), "X1:X2");
        assert_eq!(TermId::Quad(2).label(), "X3^2");
    }

    #[test]
    fn bad_labels() {
        for s in ["", "X", "X0", "Y1", "X2:X1", "X1:X1", "X1^3", "X-1", "X1:", "X１"] {
            assert!(s.parse::<TermId>().is_err(), "{s:?} should not parse");
        }
    }

    #[test]
    fn termset_sorts_and_rejects_duplicates() {
        let ts = TermSet::new(3, vec![TermId::Quad(0), TermId::Main(2), TermId::Inter(0, 1)]).unwrap();
        assert_eq!(ts.terms(), &[TermId::Main(2), TermId::Inter(0, 1), TermId::Quad(0)]);
        assert!(TermSet::new(3, vec![TermId::Main(0), TermId::Main(0)]).is_err());
        assert!(TermSet::new(2, vec![TermId::Main(2)]).is_err());
        assert!(TermSet::new(2, vec![TermId::Inter(1, 0)]).is_err());
    }

    #[test]
    fn closure_adds_parents() {
        let ts = TermSet::new(4, vec![TermId::Inter(1, 3), TermId::Quad(0)]).unwrap();
        let c = ts.heredity_closure();
        assert_eq!(
            c.terms(),
            &[
                TermId::Main(0),
                TermId::Main(1),
                TermId::Main(3),
                TermId::Inter(1, 3),
                TermId::Quad(0)
            ]
        );
    }

    #[test]
    fn expand_small_rows() {
        let terms = canonical_terms(2).unwrap();
        let raw = RawDesign::from_rows(2, 2, &[2.0, 3.0, 0.0, 5.0]).unwrap();
        let x = expand(&raw, &terms).unwrap();
        let row0: Vec<f64> = x.row(0).iter().copied().collect();
        let row1: Vec<f64> = x.row(1).iter().copied().collect();
        assert_eq!(row0, vec![2.0, 3.0, 6.0, 4.0, 9.0]);
        assert_eq!(row1, vec![0.0, 5.0, 0.0, 0.0, 25.0]);
    }

    #[test]
    fn expand_dimension_mismatch() {
        let raw = RawDesign::from_rows(1, 2, &[1.0, 2.0]).unwrap();
        assert!(matches!(
            expand(&raw, &canonical_terms(3).unwrap()),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn raw_design_rejects_non_finite() {
        assert!(RawDesign::from_rows(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(RawDesign::from_rows(0, 2, &[]).is_err());
    }

    #[test]
    fn expand_random_4x3_entrywise() {
        let data = [
            0.3, -1.2, 2.5, //
            1.7, 0.4, -0.9, //
            -2.2, 3.1, 0.05, //
            0.0, -0.6, 1.4,
        ];
        let raw = RawDesign::from_rows(4, 3, &data).unwrap();
        let terms = canonical_terms(3).unwrap();
        let x = expand(&raw, &terms).unwrap();
        for (c, t) in terms.iter().enumerate() {
            for i in 0..4 {
                let row = &data[i * 3..i * 3 + 3];
                let expect = match *t {
                    TermId::Main(j) => row[j],
                    TermId::Quad(j) => row[j] * row[j],
                    TermId::Inter(j, k) => row[j] * row[k],
                };
                assert_eq!(x[(i, c)], expect);
            }
        }
    }

    proptest! {
        #[test]
        fn term_count_formula(p in 1usize..40) {
            let t = canonical_terms(p).unwrap();
            prop_assert_eq!(t.len(), 2 * p + p * (p - 1) / 2);
            for (pos, term) in t.iter().enumerate() {
                for j in term.parents() {
                    let parent = t.index_of(TermId::Main(j)).unwrap();
                    prop_assert!(parent <= pos);
                }
            }
        }

        #[test]
        fn expand_is_deterministic(
            p in 1usize..5,
            data in proptest::collection::vec(-10.0f64..10.0, 20),
        ) {
            let n = data.len() / p;
            let raw = RawDesign::from_rows(n, p, &data[..n * p]).unwrap();
            let terms = canonical_terms(p).unwrap();
            let a = expand(&raw, &terms).unwrap();
            let b = expand(&raw, &terms).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
