//! The `hereditas` command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{parse_ratio, sha256_hex, shuffle_split, unix_now, write_atomic, RunManifest, TabularFile};
use crate::metrics::mse;
use crate::selectors::Tuning;
use crate::simulation::{
    self, fit_pipeline, run_campaign, CampaignReport, Cell, PipelineOptions, SettingConfig, Split,
};
use crate::standardize::{
    fit_location_scale, standardize_hierarchical, standardize_regular, DeltaRule, StandardizationParams,
};
use crate::terms::canonical_terms;

#[derive(Debug, Parser)]
#[command(
    name = "hereditas",
    version,
    about = "Variable selection under strong heredity via hierarchical standardization"
)]
pub struct Cli {
    /// Master seed (simulation) or row-shuffle seed (fit).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "HEREDITAS_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Tsv => "tsv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lasso,
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Regular,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    MeanSd,
    MedianIqr,
}

impl From<MethodArg> for simulation::Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lasso => simulation::Method::Lasso,
            MethodArg::Stepwise => simulation::Method::Stepwise,
        }
    }
}

impl From<SchemeArg> for simulation::Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Regular => simulation::Scheme::Regular,
            SchemeArg::Hierarchical => simulation::Scheme::Hierarchical,
        }
    }
}

impl From<EstimatorArg> for crate::standardize::Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::MeanSd => crate::standardize::Estimator::MeanSD,
            EstimatorArg::MedianIqr => crate::standardize::Estimator::MedianIQR,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation campaign for a preset or a JSON setting.
    Simulate(SimulateArgs),
    /// Select a model on a CSV dataset and report its heredity.
    Fit(FitArgs),
    /// Write the standardized second-order design of a CSV dataset.
    Standardize(StandardizeArgs),
    /// Render a saved campaign JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["preset", "config"])))]
pub struct SimulateArgs {
    /// One of setting1..setting9, R1..R9.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON setting file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_valid: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Zero all but two parent main effects of the truth.
    #[arg(long)]
    pub reduced_truth: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Lasso, MethodArg::Stepwise])]
    pub methods: Vec<MethodArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SchemeArg::Regular, SchemeArg::Hierarchical])]
    pub schemes: Vec<SchemeArg>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column; excluded from the predictors.
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::Hierarchical)]
    pub scheme: SchemeArg,
    /// Main-effect estimator for the hierarchical scheme.
    #[arg(long, value_enum, default_value_t = EstimatorArg::MeanSd)]
    pub estimator: EstimatorArg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Lasso)]
    pub method: MethodArg,
    /// train:validation:test ratio.
    #[arg(long, default_value = "3:1:1")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct StandardizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Campaign JSON written by `simulate --format json`.
    #[arg(long)]
    pub input: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: Vec<String>) -> Result<()> {
    let cli = Cli::try_parse_from(&args).map_err(|e| Error::InvalidOptions(e.to_string()))?;
    execute(&cli, args)
}

/// Runs an already parsed command on a pool of `cli.threads` workers.
pub fn execute(cli: &Cli, args: Vec<String>) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidOptions(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a, args),
        Command::Fit(a) => cmd_fit(cli, a, args),
        Command::Standardize(a) => cmd_standardize(cli, a, args),
        Command::Report(a) => cmd_report(cli, a),
    })
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, args: Vec<String>) -> Result<()> {
    let started = unix_now();
    let mut cfg = match (&a.preset, &a.config) {
        (Some(name), _) => simulation::preset(name)?,
        (None, Some(path)) => SettingConfig::from_json(&std::fs::read(path)?)?,
        (None, None) => return Err(Error::InvalidOptions("give --preset or --config".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_valid {
        cfg.n_valid = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    cfg.reduced_truth |= a.reduced_truth;
    cfg.validate()?;
    let cells: Vec<Cell> = a
        .methods
        .iter()
        .flat_map(|&m| {
            a.schemes.iter().map(move |&s| Cell {
                method: m.into(),
                scheme: s.into(),
            })
        })
        .collect();
    let opts = PipelineOptions::default();
    let report = run_campaign(&cfg, &cells, &opts)?;

    let mut stem = cfg.label();
    if cfg.reduced_truth {
        stem.push_str("-reduced");
    }
    let path = cli.out_dir.join(format!("{stem}.{}", cli.format.ext()));
    write_atomic(&path, render_campaign(&report, cli.format)?.as_bytes())?;
    let config = json!({ "setting": cfg, "cells": cells, "pipeline": opts });
    let mut manifest = RunManifest::new("simulate", args, config, cfg.master_seed, started);
    manifest.outputs.push(path.clone());
    manifest.write(&cli.out_dir.join(format!("{stem}.manifest.json")))?;
    println!("{}", path.display());
    Ok(())
}

fn render_campaign(report: &CampaignReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Tsv => report.to_tsv(),
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
    })
}

fn load_data(a: &DataArgs) -> Result<(TabularFile, String)> {
    let bytes = std::fs::read(&a.data)?;
    Ok((TabularFile::parse(&bytes)?, sha256_hex(&bytes)))
}

#[derive(Debug, Serialize)]
struct FitReport {
    method: simulation::Method,
    scheme: simulation::Scheme,
    response: String,
    /// Term label of each predictor column, e.g. `X1` -> first column name.
    mains: Vec<(String, String)>,
    split: [usize; 3],
    tuning: Tuning,
    heredity: &'static str,
    violators: Vec<String>,
    test_mse: Option<f64>,
    intercept: f64,
    coefficients: Vec<(String, f64)>,
}

impl FitReport {
    fn to_tsv(&self) -> String {
        let mut out = String::new();
        let num = |v: Option<f64>| v.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
        let (tname, tval) = match self.tuning {
            Tuning::Lambda(l) => ("lambda", l),
            Tuning::Aic(a) => ("aic", a),
        };
        let _ = writeln!(out, "key\tvalue");
        let _ = writeln!(out, "method\t{}", self.method.as_str());
        let _ = writeln!(out, "scheme\t{}", self.scheme.as_str());
        let _ = writeln!(out, "response\t{}", self.response);
        let _ = writeln!(out, "split\t{}:{}:{}", self.split[0], self.split[1], self.split[2]);
        let _ = writeln!(out, "{tname}\t{}", num(Some(tval)));
        let _ = writeln!(out, "heredity\t{}", self.heredity);
        let _ = writeln!(out, "violators\t{}", self.violators.join(","));
        let _ = writeln!(out, "test_mse\t{}", num(self.test_mse));
        for (label, name) in &self.mains {
            let _ = writeln!(out, "main\t{label}={name}");
        }
        out
    }
}

fn cmd_fit(cli: &Cli, a: &FitArgs, args: Vec<String>) -> Result<()> {
    let started = unix_now();
    let (table, digest) = load_data(&a.data)?;
    let (x, y) = table.design_and_response(&a.data.response)?;
    let ratio = parse_ratio(&a.split)?;
    let seed = cli.seed.unwrap_or(0);
    let [tr, va, te] = shuffle_split(x.n(), ratio, seed)?;
    let method: simulation::Method = a.method.into();
    if tr.len() < 2 || (method == simulation::Method::Lasso && va.is_empty()) {
        return Err(Error::InvalidDimension(format!(
            "{} rows give splits {}/{}/{}, too small for {}",
            x.n(),
            tr.len(),
            va.len(),
            te.len(),
            method.as_str()
        )));
    }
    let take = |rows: &[usize]| -> Result<Split> {
        Ok(Split {
            x: x.select_rows(rows)?,
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])),
        })
    };
    let (train, valid) = (take(&tr)?, take(&va)?);
    let cell = Cell {
        method,
        scheme: a.data.scheme.into(),
    };
    let opts = PipelineOptions {
        estimator: a.data.estimator.into(),
        ..PipelineOptions::default()
    };
    let outcome = fit_pipeline(&train, (!va.is_empty()).then_some(&valid), cell, &opts)?;
    let test_mse = if te.is_empty() {
        None
    } else {
        let test = take(&te)?;
        Some(mse(&outcome.raw.predict_raw(&test.x)?, &test.y)?)
    };
    let names = x.names().map(<[String]>::to_vec).unwrap_or_default();
    let report = FitReport {
        method,
        scheme: cell.scheme,
        response: a.data.response.clone(),
        mains: names
            .iter()
            .enumerate()
            .map(|(j, n)| (format!("X{}", j + 1), n.clone()))
            .collect(),
        split: [tr.len(), va.len(), te.len()],
        tuning: outcome.tuning,
        heredity: if outcome.heredity.satisfied {
            "satisfied"
        } else {
            "violated"
        },
        violators: outcome.heredity.violators.iter().map(|t| t.label()).collect(),
        test_mse,
        intercept: outcome.raw.intercept(),
        coefficients: outcome.raw.iter().map(|(t, v)| (t.label(), v)).collect(),
    };

    let dir = &cli.out_dir;
    let coef_path = dir.join("coefficients.csv");
    let mut coef_csv = Vec::new();
    outcome.raw.write_csv(&mut coef_csv)?;
    write_atomic(&coef_path, &coef_csv)?;
    let params_path = dir.join("params.json");
    write_atomic(&params_path, &serde_json::to_vec_pretty(&outcome.params)?)?;
    let report_path = dir.join(format!("fit_report.{}", cli.format.ext()));
    let body = match cli.format {
        Format::Tsv => report.to_tsv(),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    write_atomic(&report_path, body.as_bytes())?;

    let config = json!({
        "data": a.data.data, "data_sha256": digest, "response": a.data.response,
        "method": method, "scheme": cell.scheme, "estimator": opts.estimator, "split": ratio,
    });
    let mut manifest = RunManifest::new("fit", args, config, seed, started);
    manifest.outputs.extend([coef_path, params_path, report_path]);
    manifest.write(&dir.join("fit.manifest.json"))?;
    println!("heredity: {}", report.heredity);
    if !report.violators.is_empty() {
        println!("violators: {}", report.violators.join(", "));
    }
    if let Some(m) = test_mse {
        println!("test mse: {m:.4}");
    }
    Ok(())
}

fn cmd_standardize(cli: &Cli, a: &StandardizeArgs, args: Vec<String>) -> Result<()> {
    let started = unix_now();
    let (table, digest) = load_data(&a.data)?;
    let x = table.design(&a.data.response)?;
    let terms = canonical_terms(x.p())?;
    let (z, params) = match a.data.scheme {
        SchemeArg::Regular => {
            let (z, rp) = standardize_regular(&x, &terms)?;
            (z, StandardizationParams::Regular(rp))
        }
        SchemeArg::Hierarchical => {
            let ls = fit_location_scale(&x, a.data.estimator.into(), DeltaRule::default())?;
            (
                standardize_hierarchical(&x, &ls, &terms)?,
                StandardizationParams::Hierarchical(ls),
            )
        }
    };
    let mut out = terms.labels().join(",");
    out.push('\n');
    for row in z.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let dir = &cli.out_dir;
    let matrix_path = dir.join("standardized.csv");
    write_atomic(&matrix_path, out.as_bytes())?;
    let params_path = dir.join("params.json");
    write_atomic(&params_path, &serde_json::to_vec_pretty(&params)?)?;
    let config = json!({
        "data": a.data.data, "data_sha256": digest, "response": a.data.response,
        "scheme": match a.data.scheme { SchemeArg::Regular => "regular", SchemeArg::Hierarchical => "hierarchical" },
        "estimator": crate::standardize::Estimator::from(a.data.estimator),
    });
    let mut manifest = RunManifest::new("standardize", args, config, cli.seed.unwrap_or(0), started);
    manifest.outputs.extend([matrix_path.clone(), params_path]);
    manifest.write(&dir.join("standardize.manifest.json"))?;
    println!("{}", matrix_path.display());
    Ok(())
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let report = read_campaign(&a.input)?;
    print!("{}", render_campaign(&report, cli.format)?);
    Ok(())
}

/// Loads a campaign JSON report.
pub fn read_campaign(path: &Path) -> Result<CampaignReport> {
    parse_campaign(&std::fs::read(path)?)
}

pub fn parse_campaign(bytes: &[u8]) -> Result<CampaignReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::Malformed(format!("campaign report: {e}")))
}
