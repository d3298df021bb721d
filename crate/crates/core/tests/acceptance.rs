//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use hereditas::metrics::{snr, MetricsReport};
use hereditas::selectors::{
    aic, lasso_fit, lasso_path, ols_fit, soft_threshold, stepwise_aic, LassoOptions, StepwiseOptions, StepwiseStart,
};
use hereditas::simulation::{
    build_truth, preset, run_campaign, CampaignReport, Cell, Method, PipelineOptions, Scheme, SettingConfig,
};
use hereditas::standardize::{
    back_transform_hierarchical, standardize_hierarchical, CoefficientVector, Estimator, LocationScale, ScaleTag,
};
use hereditas::terms::{canonical_terms, RawDesign, TermId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 7;

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn check(&mut self, id: &str, title: &str, pass: bool, detail: String) {
        println!("[{}] {id} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn campaign(name: &str, replicates: usize, reduced: bool) -> CampaignReport {
    let mut cfg: SettingConfig = preset(name).unwrap();
    cfg.replicates = replicates;
    cfg.master_seed = SEED;
    cfg.reduced_truth = reduced;
    run_campaign(&cfg, &Cell::all(), &PipelineOptions::default()).unwrap()
}

fn summary(r: &CampaignReport, method: Method, scheme: Scheme) -> &MetricsReport {
    &r.cell(method, scheme).unwrap().summary
}

fn mean(s: Option<hereditas::metrics::Summary>) -> f64 {
    s.map_or(f64::NAN, |s| s.mean)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn c1_golden(out: &mut Outcome) {
    let t = Instant::now();
    let ls = LocationScale::new(
        Estimator::MeanSD,
        vec![0.03898826, -0.02594940, -0.01980965],
        vec![1.0283163, 0.9127104, 0.9451362],
        vec![0.0; 3],
    )
    .unwrap();
    let std = CoefficientVector::from_pairs(
        canonical_terms(3).unwrap(),
        0.0,
        [
            (TermId::Quad(0), 0.3822),
            (TermId::Inter(0, 1), 0.9058),
            (TermId::Inter(0, 2), 0.0804),
        ],
        ScaleTag::HierStd,
    )
    .unwrap();
    let raw = back_transform_hierarchical(&std, &ls).unwrap();
    let r4 = |t: TermId| (raw.value_or_zero(t) * 1e4).round() / 1e4;
    let (g12, b1, a1, g13) = (
        r4(TermId::Inter(0, 1)),
        r4(TermId::Quad(0)),
        r4(TermId::Main(0)),
        r4(TermId::Inter(0, 2)),
    );
    let secs = t.elapsed().as_secs_f64();
    out.check(
        "C1",
        "worked-example back-transform",
        g12 == 0.9651 && b1 == 0.3614 && a1 == -0.0015 && (g13 == 0.0827 || g13 == 0.0828) && secs < 1.0,
        format!("gamma12={g12:.4} beta1={b1:.4} alpha1={a1:.4} gamma13={g13:.4} ({secs:.3}s)"),
    );
}

fn every_replicate_msh_one(r: &CampaignReport, method: Method) -> bool {
    r.cell(method, Scheme::Hierarchical)
        .unwrap()
        .replicates
        .iter()
        .all(|m| m.msh == 1.0)
}

fn c2_heredity(out: &mut Outcome, s1: &CampaignReport) {
    let mut detail = vec![];
    let mut pass = true;
    for method in [Method::Lasso, Method::Stepwise] {
        let msh = summary(s1, method, Scheme::Hierarchical).msh.unwrap();
        pass &= msh.mean == 1.0 && msh.se == 0.0 && msh.count == 50 && every_replicate_msh_one(s1, method);
        detail.push(format!(
            "{} mean={} se={} n={}",
            method.as_str(),
            msh.mean,
            msh.se,
            msh.count
        ));
    }
    out.check(
        "C2",
        "hierarchical MSH exactly 1 (setting1, 50 reps)",
        pass,
        detail.join("; "),
    );
}

fn c3_traditional(out: &mut Outcome, s1: &CampaignReport) {
    let m = mean(summary(s1, Method::Lasso, Scheme::Regular).msh);
    out.check(
        "C3",
        "traditional lasso MSH in [0.20, 0.60] and < 1",
        (0.20..=0.60).contains(&m) && m < 1.0,
        format!("mean msh={m:.4}"),
    );
}

fn c4_snr(out: &mut Outcome) {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = vec![];
    let mut flagged = vec![];
    for i in 1..=9 {
        let cfg = preset(&format!("setting{i}")).unwrap();
        let v = snr(&build_truth(&cfg).unwrap(), cfg.x_distribution);
        let printed = cfg.reference_snr.unwrap();
        pass &= (v - printed.value).abs() <= 0.01;
        // the campaign report must carry the same flag
        let agrees = printed.agrees_with(v);
        pass &= hereditas::simulation::check_snr(&cfg).unwrap().agrees == Some(agrees);
        if !agrees {
            flagged.push(format!("setting{i} {v:.4} vs {}", printed.value));
        }
        parts.push(format!("{i}:{v:.4}"));
    }
    let r2 = preset("R2").unwrap();
    let v188 = snr(&build_truth(&r2).unwrap(), r2.x_distribution);
    let at3 = (v188 * 1e3).round() / 1e3;
    pass &= at3 == 0.188;
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    out.check(
        "C4",
        "SNR matches printed ratios within 0.01",
        pass,
        format!(
            "{}; normal setting1 at 3dp={at3:.3}; flagged: [{}] ({secs:.3}s)",
            parts.join(" "),
            flagged.join(", ")
        ),
    );
}

fn c5_orderings(out: &mut Outcome) {
    let mut pass = true;
    let mut detail = vec![];
    for name in ["setting1", "setting2", "setting7"] {
        let r = campaign(name, 20, false);
        for method in [Method::Lasso, Method::Stepwise] {
            let h = summary(&r, method, Scheme::Hierarchical);
            let g = summary(&r, method, Scheme::Regular);
            let (hs, gs) = (mean(h.sensitivity), mean(g.sensitivity));
            let (hp, gp) = (mean(h.specificity), mean(g.specificity));
            pass &= hs > gs && hp <= gp;
            detail.push(format!(
                "{name}/{}: sens {hs:.3}>{gs:.3} spec {hp:.3}<={gp:.3}",
                method.as_str()
            ));
        }
    }
    out.check(
        "C5",
        "sensitivity up, specificity not up (20 reps)",
        pass,
        detail.join("; "),
    );
}

fn c6_mse(out: &mut Outcome, s1: &CampaignReport) {
    let h = mean(summary(s1, Method::Lasso, Scheme::Hierarchical).mse);
    let g = mean(summary(s1, Method::Lasso, Scheme::Regular).mse);
    let gap = (h - g).abs() / g;
    out.check(
        "C6",
        "lasso test MSE comparable (relative gap < 0.10)",
        gap < 0.10,
        format!("hierarchical={h:.3} traditional={g:.3} gap={gap:.4}"),
    );
}

fn c7_reduced(out: &mut Outcome, s1: &CampaignReport) {
    let reduced = campaign("setting1", 50, true);
    let full = mean(summary(s1, Method::Lasso, Scheme::Hierarchical).sensitivity);
    let red = mean(summary(&reduced, Method::Lasso, Scheme::Hierarchical).sensitivity);
    let loss = (full - red) / full;
    let all_one = every_replicate_msh_one(&reduced, Method::Lasso);
    out.check(
        "C7",
        "heredity-violating truth: MSH 1, sensitivity loss < 15%",
        all_one && loss < 0.15,
        format!("msh all 1.0={all_one}; sensitivity full={full:.4} reduced={red:.4} loss={loss:.4}"),
    );
}

fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, b0: f64, b: &[f64], lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = y - (x * DVector::from_column_slice(b)).add_scalar(b0);
    let mut worst = r.sum().abs() / n;
    for (col, &bj) in x.column_iter().zip(b) {
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        let g = col.dot(&r) / n / sd;
        worst = worst.max(if bj != 0.0 {
            (g - lambda * bj.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        });
    }
    worst
}

fn c8_lasso(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let tight = LassoOptions {
        tol: 1e-12,
        ..LassoOptions::default()
    };
    let mut ols_err: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(2..10);
        let x = gaussian(&mut rng, 50, m);
        let y = DVector::from_fn(50, |i, _| {
            x[(i, 0)] - 0.5 * x[(i, m - 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        let o = ols_fit(&x, &y).unwrap();
        let f = lasso_fit(&x, &y, 0.0, &tight).unwrap();
        ols_err = ols_err.max((f.intercept - o.intercept).abs());
        for j in 0..m {
            ols_err = ols_err.max((f.coefs[j] - o.coefs[j]).abs());
        }
    }

    let mut soft_err: f64 = 0.0;
    let n = 60;
    for m in [3, 6, 10] {
        let mut xc = gaussian(&mut rng, n, m);
        for mut c in xc.column_iter_mut() {
            let mu = c.mean();
            c.add_scalar_mut(-mu);
        }
        let x = xc.qr().q() * (n as f64).sqrt();
        let y = DVector::from_fn(n, |i, _| 0.8 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let opts = LassoOptions {
            internal_standardize: false,
            ..tight.clone()
        };
        for lambda in [0.02, 0.2, 0.5] {
            let f = lasso_fit(&x, &y, lambda, &opts).unwrap();
            for j in 0..m {
                let z = x.column(j).dot(&y) / n as f64;
                soft_err = soft_err.max((f.coefs[j] - soft_threshold(z, lambda)).abs());
            }
        }
    }

    let mut kkt: f64 = 0.0;
    let mut solutions = 0;
    for _ in 0..5 {
        let x = gaussian(&mut rng, 80, 15);
        let y = DVector::from_fn(80, |i, _| {
            x[(i, 2)] + 0.3 * x[(i, 7)] + rng.sample::<f64, _>(StandardNormal)
        });
        let path = lasso_path(&x, &y, &LassoOptions::default()).unwrap();
        for (l, f) in path.lambdas.iter().zip(&path.fits) {
            if f.converged {
                kkt = kkt.max(kkt_violation(&x, &y, f.intercept, &f.coefs, *l));
                solutions += 1;
            }
        }
    }
    out.check(
        "C8",
        "lasso oracles (OLS 1e-6, soft-threshold 1e-8, KKT 1e-6)",
        ols_err < 1e-6 && soft_err < 1e-8 && kkt < 1e-6 && solutions > 0,
        format!("max |lasso-OLS|={ols_err:.2e}; max |lasso-soft|={soft_err:.2e}; max KKT={kkt:.2e} over {solutions} solutions"),
    );
}

fn c9_stepwise(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut pass = true;
    let mut moves = 0;
    for case in 0..20 {
        let m = rng.random_range(1..=6);
        let x = gaussian(&mut rng, 25, m);
        let y = DVector::from_fn(25, |i, _| 0.7 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let tss = y.add_scalar(-y.mean()).norm_squared();
        let score = |cols: &BTreeSet<usize>| -> Option<f64> {
            let cols: Vec<usize> = cols.iter().copied().collect();
            ols_fit(&x.select_columns(&cols), &y)
                .ok()
                .map(|f| aic(25, f.rss, cols.len() + 1, tss))
        };
        let start = if case % 2 == 0 {
            StepwiseStart::FullModel
        } else {
            StepwiseStart::NullModel
        };
        let fit = stepwise_aic(
            &x,
            &y,
            &StepwiseOptions {
                start,
                max_selected: None,
            },
        )
        .unwrap();
        pass &= fit.trace.windows(2).all(|w| w[1] < w[0]);
        moves += fit.iterations;
        let chosen: BTreeSet<usize> = (0..m).filter(|&j| fit.coefs[j] != 0.0).collect();
        let here = score(&chosen).unwrap();
        for j in 0..m {
            let mut nb = chosen.clone();
            if !nb.remove(&j) {
                nb.insert(j);
            }
            if let Some(s) = score(&nb) {
                pass &= here <= s + 1e-9;
            }
        }
    }
    out.check(
        "C9",
        "stepwise returns 1-move AIC local optimum with strictly decreasing AIC",
        pass,
        format!("20 instances, {moves} accepted moves"),
    );
}

fn c10_equivalence(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(1..=6);
        let n = 20;
        let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-4.0..4.0)).collect();
        let raw = RawDesign::from_rows(n, p, &data).unwrap();
        let ls = LocationScale::new(
            Estimator::MeanSD,
            (0..p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            (0..p).map(|_| rng.random_range(0.1..3.0)).collect(),
            vec![0.0; p],
        )
        .unwrap();
        let terms = canonical_terms(p).unwrap();
        let vals: Vec<f64> = (0..terms.len())
            .map(|_| {
                if rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let std = CoefficientVector::new(terms.clone(), rng.random_range(-1.0..1.0), vals, ScaleTag::HierStd).unwrap();
        let pz = std
            .predict(&standardize_hierarchical(&raw, &ls, &terms).unwrap())
            .unwrap();
        let back = back_transform_hierarchical(&std, &ls).unwrap();
        let pr = back.predict_raw(&raw).unwrap();
        for i in 0..n {
            worst = worst.max((pz[i] - pr[i]).abs() / pz[i].abs().max(1.0));
        }
    }
    out.check(
        "C10",
        "standardized and back-transformed predictions agree (100 triples)",
        worst < 1e-10,
        format!("max relative difference={worst:.2e}"),
    );
}

fn c11_determinism(out: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = vec![];
    for threads in ["1", "4"] {
        let sub = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hereditas"))
            .args([
                "simulate",
                "--preset",
                "setting1",
                "--seed",
                "7",
                "--replicates",
                "10",
                "--format",
                "json",
                "--threads",
                threads,
            ])
            .arg("--out-dir")
            .arg(&sub)
            .output()
            .unwrap()
            .status;
        reports.push(
            status
                .success()
                .then(|| std::fs::read(sub.join("setting1.json")).unwrap()),
        );
    }
    let same = matches!((&reports[0], &reports[1]), (Some(a), Some(b)) if a == b);
    out.check(
        "C11",
        "simulate report byte-identical across --threads 1 and 4",
        same,
        format!("{} bytes", reports[0].as_ref().map_or(0, Vec::len)),
    );
}

fn main() {
    let mut out = Outcome { failures: 0 };
    let started = Instant::now();
    c1_golden(&mut out);
    let s1 = campaign("setting1", 50, false);
    c2_heredity(&mut out, &s1);
    c3_traditional(&mut out, &s1);
    c4_snr(&mut out);
    c5_orderings(&mut out);
    c6_mse(&mut out, &s1);
    c7_reduced(&mut out, &s1);
    c8_lasso(&mut out);
    c9_stepwise(&mut out);
    c10_equivalence(&mut out);
    c11_determinism(&mut out);
    println!(
        "acceptance: {} of 11 criteria passed in {:.1}s",
        11 - out.failures,
        started.elapsed().as_secs_f64()
    );
    if out.failures > 0 {
        std::process::exit(1);
    }
}
