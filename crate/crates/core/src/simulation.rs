//! Seeded synthetic settings, the select-and-back-transform pipeline, and
//! replicate campaigns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{snr, MetricsReport, ReplicateMetrics, Summary, TruthSpec};
use crate::selectors::{stepwise_aic, tune_lasso, FitResult, LassoOptions, StepwiseOptions, Tuning};
use crate::standardize::{
    back_transform_hierarchical, back_transform_regular, check_heredity, fit_location_scale, standardize_hierarchical,
    standardize_regular, CoefficientVector, DeltaRule, Estimator, HeredityReport, ScaleTag, StandardizationParams,
};
use crate::terms::{canonical_terms, RawDesign, TermClass, TermId};

/// Distribution of every main effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum XDistribution {
    #[default]
    StandardNormal,
    /// `exp(Z)` with `Z` standard normal.
    LogNormal01,
}

impl XDistribution {
    /// Maps a standard-normal draw onto this distribution.
    pub fn transform(self, z: f64) -> f64 {
        match self {
            XDistribution::StandardNormal => z,
            XDistribution::LogNormal01 => z.exp(),
        }
    }
}

/// A published value together with the number of decimals it was printed
/// with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedValue {
    pub value: f64,
    pub decimals: u32,
}

impl PrintedValue {
    fn new(value: f64, decimals: u32) -> Self {
        PrintedValue { value, decimals }
    }

    /// True when `x` rounds to the printed value.
    pub fn agrees_with(&self, x: f64) -> bool {
        let half_unit = 0.5 * 10f64.powi(-(self.decimals as i32));
        (x - self.value).abs() <= half_unit + 1e-12
    }
}

fn default_p() -> usize {
    10
}
fn default_n_train() -> usize {
    200
}
fn default_n_valid() -> usize {
    200
}
fn default_n_test() -> usize {
    10_000
}
fn default_replicates() -> usize {
    50
}

/// Generative description of one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_p")]
    pub p: usize,
    pub n_active_mains: usize,
    pub n_active_inters: usize,
    pub n_active_quads: usize,
    /// Active mains beyond the heredity subset, with no active children.
    #[serde(default)]
    pub extra_active_mains: usize,
    pub coef_main: f64,
    pub coef_inter: f64,
    pub coef_quad: f64,
    pub sigma: f64,
    #[serde(default)]
    pub x_distribution: XDistribution,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_valid")]
    pub n_valid: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Keep only the first two heredity-subset mains active, so the truth
    /// violates strong heredity.
    #[serde(default)]
    pub reduced_truth: bool,
    /// Published SNR for cross-checking.
    #[serde(default)]
    pub reference_snr: Option<PrintedValue>,
}

impl SettingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let m = self.n_active_mains;
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if m + self.extra_active_mains > self.p {
            return bad(format!(
                "{m} + {} active mains exceed p = {}",
                self.extra_active_mains, self.p
            ));
        }
        if self.n_active_inters > m * m.saturating_sub(1) / 2 {
            return bad(format!(
                "{} interactions cannot be formed among {m} mains",
                self.n_active_inters
            ));
        }
        if self.n_active_quads > m {
            return bad(format!(
                "{} quadratics cannot be formed from {m} mains",
                self.n_active_quads
            ));
        }
        for (name, v) in [
            ("coef_main", self.coef_main),
            ("coef_inter", self.coef_inter),
            ("coef_quad", self.coef_quad),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        for (name, v) in [
            ("n_train", self.n_train),
            ("n_valid", self.n_valid),
            ("n_test", self.n_test),
            ("replicates", self.replicates),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.n_train < 2 {
            return bad("n_train must be at least 2".into());
        }
        Ok(())
    }

    /// Parses and validates a JSON setting.
    pub fn from_json(bytes: &[u8]) -> Result<SettingConfig> {
        let cfg: SettingConfig =
            serde_json::from_slice(bytes).map_err(|e| Error::InvalidConfig(format!("setting JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom".into())
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 18] = [
    "setting1", "setting2", "setting3", "setting4", "setting5", "setting6", "setting7", "setting8", "setting9", "R1",
    "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9",
];

#[allow(clippy::too_many_arguments)]
fn base(
    name: &str,
    mains: usize,
    extra: usize,
    inters: usize,
    quads: usize,
    coefs: (f64, f64, f64),
    sigma: f64,
    snr: PrintedValue,
) -> SettingConfig {
    SettingConfig {
        name: Some(name.into()),
        p: 10,
        n_active_mains: mains,
        n_active_inters: inters,
        n_active_quads: quads,
        extra_active_mains: extra,
        coef_main: coefs.0,
        coef_inter: coefs.1,
        coef_quad: coefs.2,
        sigma,
        x_distribution: XDistribution::StandardNormal,
        estimator: Estimator::MeanSD,
        n_train: default_n_train(),
        n_valid: default_n_valid(),
        n_test: default_n_test(),
        replicates: default_replicates(),
        master_seed: 0,
        reduced_truth: false,
        reference_snr: Some(snr),
    }
}

/// Built-in settings: `setting1`..`setting9` form a 3x3 grid over the size of
/// the active set and the second-order coefficient size; `R1`..`R3` vary the
/// main-effect distribution and the estimator on the `setting1` truth;
/// `R4`..`R9` enlarge main effects or add active mains without children.
pub fn preset(name: &str) -> Result<SettingConfig> {
    let cfg = match name {
        "setting1" | "setting2" | "setting3" | "setting4" | "setting5" | "setting6" | "setting7" | "setting8"
        | "setting9" => {
            let i: usize = name["setting".len()..].parse().expect("digit");
            let mains = 3 + (i - 1) / 3;
            let c = ((i - 1) % 3 + 1) as f64;
            let sigma = [8.0, 16.0, 15.0][(i - 1) % 3];
            let printed = [0.19, 0.15, 0.37, 0.28, 0.23, 0.58, 0.39, 0.33, 0.83][i - 1];
            base(
                name,
                mains,
                0,
                mains * (mains - 1) / 2,
                mains,
                (1.0, c, c),
                sigma,
                PrintedValue::new(printed, 2),
            )
        }
        "R1" | "R2" | "R3" => {
            let mut cfg = base(name, 3, 0, 3, 3, (1.0, 1.0, 1.0), 8.0, PrintedValue::new(0.188, 3));
            if name != "R2" {
                cfg.x_distribution = XDistribution::LogNormal01;
                cfg.reference_snr = Some(PrintedValue::new(364.018, 3));
            }
            if name != "R1" {
                cfg.estimator = Estimator::MedianIQR;
            }
            cfg
        }
        "R4" => base(name, 3, 0, 3, 3, (3.0, 1.0, 1.0), 8.0, PrintedValue::new(0.564, 3)),
        "R5" => base(name, 4, 0, 6, 4, (5.0, 3.0, 1.0), 8.0, PrintedValue::new(2.541, 3)),
        "R6" => base(name, 5, 0, 10, 5, (5.0, 3.0, 3.0), 8.0, PrintedValue::new(4.8, 1)),
        "R7" => base(name, 3, 1, 3, 3, (1.0, 1.0, 1.0), 8.0, PrintedValue::new(0.204, 3)),
        "R8" => base(name, 4, 2, 6, 4, (1.0, 3.0, 3.0), 15.0, PrintedValue::new(0.587, 3)),
        "R9" => base(name, 5, 3, 10, 5, (5.0, 3.0, 3.0), 8.0, PrintedValue::new(5.979, 3)),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset '{name}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// The generating model of a setting. Active terms sit on the lowest
/// indices: mains `0..m`, then the extra mains, interactions in
/// lexicographic order among the first `m` mains, and quadratics of the
/// first `m` mains.
pub fn build_truth(cfg: &SettingConfig) -> Result<TruthSpec> {
    cfg.validate()?;
    let m = cfg.n_active_mains;
    let mut coefs = BTreeMap::new();
    for j in 0..m + cfg.extra_active_mains {
        let kept = !cfg.reduced_truth || j >= m || j < 2;
        if kept {
            coefs.insert(TermId::Main(j), cfg.coef_main);
        }
    }
    let pairs = (0..m).flat_map(|j| (j + 1..m).map(move |k| (j, k)));
    for (j, k) in pairs.take(cfg.n_active_inters) {
        coefs.insert(TermId::Inter(j, k), cfg.coef_inter);
    }
    for j in 0..cfg.n_active_quads {
        coefs.insert(TermId::Quad(j), cfg.coef_quad);
    }
    TruthSpec::new(cfg.p, coefs, cfg.sigma)
}

/// Main effects and response of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: RawDesign,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateData {
    pub index: u64,
    pub train: Split,
    pub valid: Split,
    pub test: Split,
    pub truth: TruthSpec,
}

fn draw_split(rng: &mut ChaCha8Rng, n: usize, dist: XDistribution, truth: &TruthSpec) -> Result<Split> {
    let p = truth.p();
    let data: Vec<f64> = (0..n * p).map(|_| dist.transform(StandardNormal.sample(rng))).collect();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(rng);
        truth.signal(&data[i * p..(i + 1) * p]) + truth.sigma * e
    });
    Ok(Split {
        x: RawDesign::from_rows(n, p, &data)?,
        y,
    })
}

/// Draws replicate `index`: ChaCha8 seeded with the master seed, on stream
/// `index`. Train, validation, and test are drawn in that order, each as
/// its row-major main effects followed by its noise.
pub fn generate_replicate(cfg: &SettingConfig, index: u64) -> Result<ReplicateData> {
    let truth = build_truth(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(index);
    let dist = cfg.x_distribution;
    Ok(ReplicateData {
        index,
        train: draw_split(&mut rng, cfg.n_train, dist, &truth)?,
        valid: draw_split(&mut rng, cfg.n_valid, dist, &truth)?,
        test: draw_split(&mut rng, cfg.n_test, dist, &truth)?,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Regular,
    Hierarchical,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::Stepwise => "stepwise",
        }
    }
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Regular => "regular",
            Scheme::Hierarchical => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub scheme: Scheme,
}

impl Cell {
    /// Every method crossed with every scheme.
    pub fn all() -> Vec<Cell> {
        [Method::Lasso, Method::Stepwise]
            .into_iter()
            .flat_map(|method| {
                [Scheme::Regular, Scheme::Hierarchical]
                    .into_iter()
                    .map(move |scheme| Cell { method, scheme })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineOptions {
    pub lasso: LassoOptions,
    pub stepwise: StepwiseOptions,
    pub delta: DeltaRule,
    /// Main-effect estimator for the hierarchical scheme.
    pub estimator: Estimator,
}

/// A selected model mapped back to raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub cell: Cell,
    pub params: StandardizationParams,
    pub standardized: CoefficientVector,
    pub raw: CoefficientVector,
    pub tuning: Tuning,
    pub heredity: HeredityReport,
}

/// Standardizes the training split, selects, and back-transforms.
///
/// The lasso is tuned on `valid`, standardized with the training
/// parameters; stepwise ignores `valid`.
pub fn fit_pipeline(
    train: &Split,
    valid: Option<&Split>,
    cell: Cell,
    opts: &PipelineOptions,
) -> Result<SelectionOutcome> {
    let terms = canonical_terms(train.x.p())?;
    let (z_train, params) = match cell.scheme {
        Scheme::Regular => {
            let (z, rp) = standardize_regular(&train.x, &terms)?;
            (z, StandardizationParams::Regular(rp))
        }
        Scheme::Hierarchical => {
            let ls = fit_location_scale(&train.x, opts.estimator, opts.delta)?;
            let z = standardize_hierarchical(&train.x, &ls, &terms)?;
            (z, StandardizationParams::Hierarchical(ls))
        }
    };
    let standardize = |raw: &RawDesign| -> Result<DMatrix<f64>> {
        match &params {
            StandardizationParams::Regular(rp) => rp.apply(raw, &terms),
            StandardizationParams::Hierarchical(ls) => standardize_hierarchical(raw, ls, &terms),
        }
    };
    let fit: FitResult = match cell.method {
        Method::Lasso => {
            let valid = valid.ok_or_else(|| Error::InvalidOptions("lasso tuning needs a validation split".into()))?;
            let z_valid = standardize(&valid.x)?;
            tune_lasso(&z_train, &train.y, &z_valid, &valid.y, &opts.lasso)?.fit
        }
        Method::Stepwise => stepwise_aic(&z_train, &train.y, &opts.stepwise)?,
    };
    let tag = match cell.scheme {
        Scheme::Regular => ScaleTag::RegularStd,
        Scheme::Hierarchical => ScaleTag::HierStd,
    };
    let standardized = fit.to_coefficients(&terms, tag)?;
    let raw = match &params {
        StandardizationParams::Regular(rp) => back_transform_regular(&standardized, rp)?,
        StandardizationParams::Hierarchical(ls) => back_transform_hierarchical(&standardized, ls)?,
    };
    let heredity = check_heredity(&raw);
    Ok(SelectionOutcome {
        cell,
        params,
        standardized,
        raw,
        tuning: fit.tuning,
        heredity,
    })
}

/// Runs one cell on one replicate and scores it against the truth.
pub fn run_pipeline(
    data: &ReplicateData,
    cell: Cell,
    opts: &PipelineOptions,
) -> Result<(SelectionOutcome, ReplicateMetrics)> {
    let wrap = |e: Error| Error::Replicate {
        index: data.index,
        source: Box::new(e),
    };
    let outcome = fit_pipeline(&data.train, Some(&data.valid), cell, opts).map_err(wrap)?;
    let pred = outcome.raw.predict_raw(&data.test.x).map_err(wrap)?;
    let mse = crate::metrics::mse(&pred, &data.test.y).map_err(wrap)?;
    let metrics = ReplicateMetrics::evaluate(&outcome.raw.selected(), &data.truth, mse);
    Ok((outcome, metrics))
}

/// Signal-to-noise ratio of a setting, checked against its printed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrCheck {
    pub value: f64,
    pub reference: Option<PrintedValue>,
    /// False when the computed value does not round to the printed one.
    pub agrees: Option<bool>,
}

pub fn check_snr(cfg: &SettingConfig) -> Result<SnrCheck> {
    let truth = build_truth(cfg)?;
    let value = snr(&truth, cfg.x_distribution);
    let agrees = cfg.reference_snr.map(|r| r.agrees_with(value));
    Ok(SnrCheck {
        value,
        reference: cfg.reference_snr,
        agrees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub scheme: Scheme,
    pub summary: MetricsReport,
    /// In replicate-index order.
    pub replicates: Vec<ReplicateMetrics>,
}

/// Aggregated campaign output. Contains nothing that depends on thread
/// count or wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub setting: SettingConfig,
    pub truth: BTreeMap<TermId, f64>,
    pub snr: SnrCheck,
    pub cells: Vec<CellReport>,
}

/// Runs every cell on every replicate. All cells of a replicate see the
/// same data. Replicates run on the current rayon pool and are folded in
/// index order, so the report does not depend on scheduling.
pub fn run_campaign(cfg: &SettingConfig, cells: &[Cell], opts: &PipelineOptions) -> Result<CampaignReport> {
    cfg.validate()?;
    if cells.is_empty() {
        return Err(Error::InvalidOptions(
            "campaign needs at least one method/scheme cell".into(),
        ));
    }
    let truth = build_truth(cfg)?;
    let opts = PipelineOptions {
        estimator: cfg.estimator,
        ..opts.clone()
    };
    let per_rep: Vec<Result<Vec<ReplicateMetrics>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_replicate(cfg, r)?;
            cells
                .iter()
                .map(|&cell| run_pipeline(&data, cell, &opts).map(|(_, m)| m))
                .collect()
        })
        .collect();
    let mut rows: Vec<Vec<ReplicateMetrics>> = vec![Vec::with_capacity(cfg.replicates); cells.len()];
    for rep in per_rep {
        for (c, m) in rep?.into_iter().enumerate() {
            rows[c].push(m);
        }
    }
    let cells = cells
        .iter()
        .zip(rows)
        .map(|(cell, replicates)| CellReport {
            method: cell.method,
            scheme: cell.scheme,
            summary: MetricsReport::aggregate(&replicates),
            replicates,
        })
        .collect();
    Ok(CampaignReport {
        setting: cfg.clone(),
        truth: truth.coefficients,
        snr: check_snr(cfg)?,
        cells,
    })
}

fn fmt4(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

impl CampaignReport {
    pub fn cell(&self, method: Method, scheme: Scheme) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.scheme == scheme)
    }

    /// Long-format table, one row per (cell, metric), numbers to 4 decimals.
    /// The SNR check is written as leading `#` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let s = &self.snr;
        let _ = writeln!(
            out,
            "# setting\t{}\n# snr\t{}",
            self.setting.label(),
            fmt4(Some(s.value)),
        );
        if let (Some(r), Some(a)) = (s.reference, s.agrees) {
            let _ = writeln!(
                out,
                "# snr_reference\t{:.*}\t{}",
                r.decimals as usize,
                r.value,
                if a { "agrees" } else { "FLAG: differs" }
            );
        }
        out.push_str("setting\tmethod\tscheme\tmetric\tmean\tmedian\tse\tn\n");
        for c in &self.cells {
            let mut metrics: Vec<(String, Option<Summary>)> = vec![
                ("msh".into(), c.summary.msh),
                ("sensitivity".into(), c.summary.sensitivity),
                ("specificity".into(), c.summary.specificity),
                ("mse".into(), c.summary.mse),
            ];
            for cs in &c.summary.by_class {
                let tag = match cs.class {
                    TermClass::Main => "ME",
                    TermClass::Interaction => "2FI",
                    TermClass::Quadratic => "QE",
                };
                metrics.push((format!("sensitivity_{tag}"), cs.sensitivity));
                metrics.push((format!("specificity_{tag}"), cs.specificity));
            }
            for (name, sum) in metrics {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    self.setting.label(),
                    c.method.as_str(),
                    c.scheme.as_str(),
                    name,
                    fmt4(sum.map(|s| s.mean)),
                    fmt4(sum.map(|s| s.median)),
                    fmt4(sum.map(|s| s.se)),
                    sum.map_or(0, |s| s.count),
                );
            }
        }
        out
    }
}
