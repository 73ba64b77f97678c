//! Acceptance suite: prints one `PASS`/`FAIL` line per criterion.
//!
//! Exits nonzero when the set of failing criteria differs from
//! [`KNOWN_FAILURES`], so a regression or an unexpected fix both surface.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bncl::graph::{BalancedNeighborhoods, Sign};
use bncl::loss::{surrogate_indicator, BatchTargets, LossConfig};
use bncl::metrics::compute_all;
use bncl::propagation::init_params_scaled;
use bncl::trainer::{grad_check, GradCheckOptions};
use bncl::{FeatureMatrix, Report};
use bncl_cli::{run, Cli};
use clap::Parser;
use common::{
    naive_metrics, random_bool_matrix, random_features, random_signed_graph, rng, to_array,
    walk_parity_counts,
};
use ndarray::array;
use rand::Rng;
use serde_json::Value;
use tempfile::TempDir;

/// Criteria that fail on the reference build; see the README.
const KNOWN_FAILURES: &[&str] = &["supervision ordering"];

const TRAIN_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn neighborhood_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut mismatches = 0usize;
    for _ in 0..200 {
        let l = r.random_range(2..=8);
        let depth = r.random_range(1..=3);
        let (pos, neg) = random_signed_graph(l, &mut r);
        let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, depth).unwrap();
        for k in 1..=depth {
            for u in 0..l {
                for v in 0..l {
                    let (even, odd) = walk_parity_counts(&pos, &neg, k, u, v);
                    if nb.dependencies(k, Sign::Pos)[(u, v)] != even
                        || nb.dependencies(k, Sign::Neg)[(u, v)] != odd
                    {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        "neighbourhood oracle",
        mismatches == 0 && t < Duration::from_secs(10),
        format!("200 graphs, {mismatches} mismatches, {:.2}s", secs(t)),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (l, n, depth) = (6, 16, 2);
    let mut worst_full = 0.0f64;
    let mut worst_l1 = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let (pos, neg) = loop {
            let g = random_signed_graph(l, &mut r);
            if g.0.sum() > 0 && g.1.sum() > 0 {
                break g;
            }
        };
        let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, depth).unwrap();
        let (q, qb) = random_features(n, l, &mut r);
        let features = FeatureMatrix::from_entail_contra(q, qb).unwrap();
        let params = init_params_scaled(l, depth, seed, 0.3);
        let targets = BatchTargets {
            kappa: 2.0,
            lambdas: (0..l).map(|_| r.random_range(0.1..0.5)).collect(),
            population: n,
            annotations: (0..3)
                .map(|row| {
                    let mut y: Vec<bool> = (0..l).map(|_| r.random_bool(0.3)).collect();
                    y[row % l] = true;
                    (row * 5, y)
                })
                .collect(),
        };
        let opts = GradCheckOptions {
            seed,
            ..Default::default()
        };
        let full = grad_check(
            &params,
            &features,
            &targets,
            &nb,
            &LossConfig::default(),
            &opts,
        )
        .unwrap();
        let l1_targets = BatchTargets {
            annotations: Vec::new(),
            ..targets
        };
        let l1_cfg = LossConfig {
            disable_l2: true,
            disable_l3: true,
            ..LossConfig::default()
        };
        let l1 = grad_check(&params, &features, &l1_targets, &nb, &l1_cfg, &opts).unwrap();
        worst_full = worst_full.max(full.max_rel_error);
        worst_l1 = worst_l1.max(l1.max_rel_error);
        checked += full.checked + l1.checked;
    }
    let t = start.elapsed();
    outcome(
        "gradient check",
        checked > 0 && worst_full <= 1e-3 && worst_l1 <= 1e-4 && t < Duration::from_secs(30),
        format!(
            "20 instances, {checked} entries, max rel err {worst_full:.2e} full / {worst_l1:.2e} L1-only, {:.2}s",
            secs(t)
        ),
    )
}

fn metrics_oracle() -> Outcome {
    let mut r = rng(31);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let density = r.random_range(0.05..0.6);
        let mut truth = random_bool_matrix(50, 8, density, &mut r);
        for (i, row) in truth.iter_mut().enumerate() {
            if !row.iter().any(|&b| b) {
                row[i % 8] = true;
            }
        }
        let pred = random_bool_matrix(50, 8, r.random_range(0.0..0.7), &mut r);
        let got: Report = compute_all(&to_array(&truth), &to_array(&pred)).unwrap();
        let (acc, ha, eb, mi, ma) = naive_metrics(&truth, &pred);
        for (a, b) in [
            (got.acc, acc),
            (got.ha, ha),
            (got.ebf1, eb),
            (got.mif1, mi),
            (got.maf1, ma),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    let perfect_truth = to_array(
        &random_bool_matrix(20, 6, 0.3, &mut r)
            .into_iter()
            .map(|mut row| {
                row[0] = true;
                row
            })
            .collect::<Vec<_>>(),
    );
    let p: Report = compute_all(&perfect_truth, &perfect_truth).unwrap();
    let perfect = [p.acc, p.ha, p.ebf1, p.mif1, p.maf1]
        .iter()
        .all(|&v| v == 1.0);
    let w: Report = compute_all(
        &array![[true, true, false], [false, false, true]],
        &array![[true, false, false], [false, false, true]],
    )
    .unwrap();
    let worked = [
        (w.acc, 0.5),
        (w.ha, 5.0 / 6.0),
        (w.ebf1, 5.0 / 6.0),
        (w.mif1, 0.8),
        (w.maf1, 2.0 / 3.0),
    ]
    .iter()
    .all(|(a, b)| (a - b).abs() <= 1e-12);
    outcome(
        "metrics oracle",
        worst <= 1e-12 && perfect && worked,
        format!("100 cases, max deviation {worst:.1e}, perfect={perfect}, worked example={worked}"),
    )
}

fn surrogate_saturation() -> Outcome {
    let hi = surrogate_indicator(1.0f64, 0.0, 10.0);
    let lo = surrogate_indicator(0.0f64, 1.0, 10.0);
    let err = (1.0 - hi).max(lo);
    outcome(
        "surrogate saturation",
        err <= 1e-4 && hi > 0.9999,
        format!("C=10: s(+1)={hi:.6}, s(-1)={lo:.2e}"),
    )
}

fn bncl(args: &[&str]) {
    let mut argv = vec!["bncl"];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(&argv).unwrap_or_else(|e| panic!("{argv:?}: {e}"));
    if let Err(e) = run(cli) {
        panic!("{argv:?}: {e}");
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, setting: &str) -> PathBuf {
    bncl(&[
        "synth",
        "--out",
        s(dir),
        "--seed",
        "7",
        "--setting",
        setting,
        "--annotated",
        "24",
    ]);
    dir.join("manifest.json")
}

struct RunResult {
    report: Value,
    elapsed: Duration,
}

/// `train` followed by `eval`; the timer covers training only.
fn train_eval(manifest: &Path, out: &Path, seed: u64, extra: &[&str]) -> RunResult {
    let seed = seed.to_string();
    let mut args = vec![
        "train",
        "--manifest",
        s(manifest),
        "--out",
        s(out),
        "--seed",
        &seed,
    ];
    args.extend_from_slice(extra);
    let start = Instant::now();
    bncl(&args);
    let elapsed = start.elapsed();
    let ckpt = out.join("checkpoint.bin");
    bncl(&[
        "eval",
        "--manifest",
        s(manifest),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(out),
    ]);
    let report =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    RunResult { report, elapsed }
}

fn metric(r: &RunResult, row: &str, key: &str) -> f64 {
    r.report[row][key].as_f64().unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn end_to_end(tmp: &Path) -> Vec<Outcome> {
    let free = synth(&tmp.join("free"), "annotation-free");
    let scarce = synth(&tmp.join("scarce"), "scarce-annotation");

    let full: Vec<RunResult> = TRAIN_SEEDS
        .iter()
        .map(|&k| train_eval(&free, &tmp.join(format!("full-{k}")), k, &[]))
        .collect();
    let ablated: Vec<RunResult> = TRAIN_SEEDS
        .iter()
        .map(|&k| {
            train_eval(
                &free,
                &tmp.join(format!("ablated-{k}")),
                k,
                &["--disable-l2", "--disable-l3"],
            )
        })
        .collect();
    let annotated: Vec<RunResult> = TRAIN_SEEDS
        .iter()
        .map(|&k| train_eval(&scarce, &tmp.join(format!("scarce-{k}")), k, &[]))
        .collect();

    let base = metric(&full[0], "0Shot-MLTC", "ebf1");
    let gains: Vec<f64> = full
        .iter()
        .map(|r| metric(r, "BNCL", "ebf1") / base - 1.0)
        .collect();
    let slowest = full.iter().map(|r| r.elapsed).max().unwrap();
    let improvement = outcome(
        "end-to-end improvement",
        gains.iter().all(|&g| g >= 0.20) && slowest < Duration::from_secs(60),
        format!(
            "baseline ebF1 {base:.3}, relative gains [{}], slowest run {:.2}s",
            fmt(&gains),
            secs(slowest)
        ),
    );

    let free_f1: Vec<f64> = full.iter().map(|r| metric(r, "BNCL", "ebf1")).collect();
    let scarce_f1: Vec<f64> = annotated
        .iter()
        .map(|r| metric(r, "BNCL", "ebf1"))
        .collect();
    let ordering = outcome(
        "supervision ordering",
        mean(&scarce_f1) >= mean(&free_f1) - 0.01,
        format!(
            "mean ebF1 scarce {:.3} vs annotation-free {:.3} (per seed [{}] vs [{}])",
            mean(&scarce_f1),
            mean(&free_f1),
            fmt(&scarce_f1),
            fmt(&free_f1)
        ),
    );

    let drops: Vec<f64> = full
        .iter()
        .zip(&ablated)
        .map(|(f, a)| metric(f, "BNCL", "ha") - metric(a, "BNCL", "ha"))
        .collect();
    let ablation = outcome(
        "ablation direction",
        drops.iter().all(|&d| d >= 0.05),
        format!("HA drop without L2 and L3 per seed [{}]", fmt(&drops)),
    );

    vec![improvement, ordering, ablation]
}

fn determinism(tmp: &Path) -> Outcome {
    let manifest = synth(&tmp.join("det-data"), "annotation-free");
    let (a, b) = (tmp.join("det-a"), tmp.join("det-b"));
    train_eval(&manifest, &a, 3, &[]);
    train_eval(&manifest, &b, 3, &[]);
    let same =
        |name: &str| std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap();
    let files = [
        "checkpoint.bin",
        "history.json",
        "report.json",
        "report.txt",
    ];
    let differing: Vec<&str> = files.iter().copied().filter(|f| !same(f)).collect();
    outcome(
        "determinism",
        differing.is_empty(),
        if differing.is_empty() {
            "checkpoint, history and reports bitwise identical".to_string()
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

fn main() {
    let tmp = TempDir::new().unwrap();
    let mut outcomes = vec![
        neighborhood_oracle(),
        gradient_check(),
        metrics_oracle(),
        surrogate_saturation(),
    ];
    outcomes.extend(end_to_end(tmp.path()));
    outcomes.push(determinism(tmp.path()));

    println!();
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let failing: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.name)
        .collect();
    let passed = outcomes.len() - failing.len();
    println!("{passed}/{} criteria pass", outcomes.len());

    let unexpected: Vec<&&str> = failing
        .iter()
        .filter(|f| !KNOWN_FAILURES.contains(f))
        .collect();
    let fixed: Vec<&&str> = KNOWN_FAILURES
        .iter()
        .filter(|f| !failing.contains(f))
        .collect();
    if !fixed.is_empty() {
        println!("known failures now passing: {fixed:?}; update KNOWN_FAILURES");
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
    println!("failing criteria match the documented known failures: {KNOWN_FAILURES:?}");
}
