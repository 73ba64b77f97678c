//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bncl::graph::{
    balanced_neighborhoods, similarity_matrix, BalancedNeighborhoods, SignedLabelGraph,
};
use bncl::interchange::{load_embeddings, load_features_with_labels, load_ground_truth, Manifest};
use bncl::metrics::{compute_all, text_table, MetricsReport};
use bncl::propagation::{baseline_0shot, forward, init_hidden, init_params, predict, ModelParams};
use bncl::synth::{generate, SynthConfig};
use bncl::trainer::{
    grad_check, resolve_supervision, train_from, Checkpoint, GradCheckOptions, GradCheckReport,
    TrainHistory, TrainSetup,
};
use bncl::{load_manifest, threshold_graph, FeatureMatrix, Setting};
use clap::Args;
use log::{info, warn};
use serde::Serialize;

use crate::config::{RunConfig, RunFlags};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const BNCL_ROW: &str = "BNCL";
pub const BASELINE_ROW: &str = "0Shot-MLTC";

fn stage<T>(name: &'static str, r: bncl::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::core(name, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable value");
    text.push('\n');
    write_text(path, &text)
}

fn manifest(path: &Path) -> Result<Manifest<f64>> {
    stage("interchange", load_manifest::<f64>(path))
}

fn build_graph(m: &Manifest<f64>, cfg: &RunConfig) -> Result<SignedLabelGraph<f64>> {
    let emb_path = stage("interchange", m.require_embeddings())?;
    let emb = stage("interchange", load_embeddings::<f64>(emb_path))?;
    let sim = stage("graph", similarity_matrix(&emb))?;
    stage("graph", threshold_graph(&sim, cfg.percentiles()?))
}

fn neighborhoods(
    m: &Manifest<f64>,
    cfg: &RunConfig,
    depth: usize,
) -> Result<BalancedNeighborhoods> {
    let g = build_graph(m, cfg)?;
    stage("graph", balanced_neighborhoods(&g, depth))
}

fn train_features(m: &Manifest<f64>) -> Result<FeatureMatrix<f64>> {
    stage(
        "interchange",
        load_features_with_labels(&m.files.train_features, m.labels()),
    )
}

fn warn_if_only_l1(m: &Manifest<f64>, cfg: &RunConfig) {
    if cfg.disable_l2 && cfg.disable_l3 && m.supervision.annotations.is_empty() {
        warn!("L2 and L3 are disabled and there are no annotations: only L1 remains");
    }
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Edge list output (tab separated).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

pub fn graph(args: &GraphArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let m = manifest(&args.manifest)?;
    let g = build_graph(&m, &cfg)?;
    println!("labels: {}", g.labels());
    println!("positive edges: {}", g.positive_edges());
    println!("negative edges: {}", g.negative_edges());
    println!("delta_pos: {}", g.delta_pos);
    println!("delta_neg: {}", g.delta_neg);
    if let Some(out) = &args.out {
        let file = File::create(out).map_err(|e| CliError::io(out, e))?;
        let mut w = BufWriter::new(file);
        g.write_edge_list(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(out, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from an earlier checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

/// Trains on the manifest's training split; shared by `train` and `ablate`.
fn fit(
    m: &Manifest<f64>,
    cfg: &RunConfig,
    start: Option<Checkpoint<f64>>,
) -> Result<(Checkpoint<f64>, TrainHistory<f64>)> {
    warn_if_only_l1(m, cfg);
    let features = train_features(m)?;
    let nb = neighborhoods(m, cfg, cfg.depth)?;
    let supervision = stage("trainer", resolve_supervision(&m.supervision))?;
    let loss = cfg.loss();
    let train_cfg = cfg.train();
    let setup = TrainSetup {
        features: &features,
        supervision: &supervision,
        neighborhoods: &nb,
        loss: &loss,
        config: &train_cfg,
    };
    let start = match start {
        Some(c) => {
            if c.params.labels() != m.labels() || c.params.depth() != cfg.depth {
                return Err(CliError::core(
                    "trainer",
                    bncl::Error::Dimension(format!(
                        "checkpoint has L={} K={}, run expects L={} K={}",
                        c.params.labels(),
                        c.params.depth(),
                        m.labels(),
                        cfg.depth
                    )),
                ));
            }
            c
        }
        None => Checkpoint::fresh(init_params(m.labels(), cfg.depth, cfg.seed)),
    };
    stage("trainer", train_from(&setup, start))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let m = manifest(&args.manifest)?;
    let start = match &args.resume {
        Some(p) => Some(stage("interchange", Checkpoint::<f64>::load(p))?),
        None => None,
    };
    let (ckpt, history) = fit(&m, &cfg, start)?;
    create_dir(&args.out)?;
    stage("interchange", ckpt.save(&args.out.join("checkpoint.bin")))?;
    write_json(&args.out.join("history.json"), &history)?;
    write_json(&args.out.join("config.json"), &cfg)?;
    if let Some(last) = history.epochs.last() {
        info!("epoch {}: total loss {:.6}", last.epoch, last.loss.total);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for report.json and report.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    #[serde(rename = "BNCL")]
    pub bncl: MetricsReport<f64>,
    #[serde(rename = "0Shot-MLTC")]
    pub baseline: MetricsReport<f64>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        text_table(&[(BNCL_ROW, &self.bncl), (BASELINE_ROW, &self.baseline)])
    }
}

fn evaluate(m: &Manifest<f64>, cfg: &RunConfig, params: &ModelParams<f64>) -> Result<EvalReport> {
    let (fpath, ypath) = stage("interchange", m.require_test())?;
    let test = stage(
        "interchange",
        load_features_with_labels::<f64>(fpath, m.labels()),
    )?;
    let truth = stage("interchange", load_ground_truth(ypath))?;
    if truth.matrix().dim() != test.entail().dim() {
        return Err(CliError::core(
            "metrics",
            bncl::Error::Dimension(format!(
                "test labels are {:?} but test features are {:?}",
                truth.matrix().dim(),
                test.entail().dim()
            )),
        ));
    }
    let nb = neighborhoods(m, cfg, params.depth())?;
    let states = stage("propagation", forward(&init_hidden(&test), params, &nb))?;
    let bncl = stage(
        "metrics",
        compute_all(truth.matrix(), &predict(&states).labels),
    )?;
    let baseline = stage(
        "metrics",
        compute_all(truth.matrix(), &baseline_0shot(&test).labels),
    )?;
    Ok(EvalReport { bncl, baseline })
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let m = manifest(&args.manifest)?;
    let ckpt = stage("interchange", Checkpoint::<f64>::load(&args.checkpoint))?;
    let report = evaluate(&m, &cfg, &ckpt.params)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    let table = report.table();
    write_text(&args.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Entries to compare.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Maximum relative error; defaults to 1e-4 when only L1 is active, else 1e-3.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt_sign: bool,
    #[command(flatten)]
    pub run: RunFlags,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let m = manifest(&args.manifest)?;
    let features = train_features(&m)?;
    let nb = neighborhoods(&m, &cfg, cfg.depth)?;
    let supervision = stage("trainer", resolve_supervision(&m.supervision))?;
    let ids: Vec<usize> = (0..features.samples().min(cfg.batch_size)).collect();
    let batch = features.select(&ids);
    let targets = supervision.batch_targets(&ids);
    let params = init_params::<f64>(m.labels(), cfg.depth, cfg.seed);
    let loss = cfg.loss();
    let l1_only = loss.disable_l2 && loss.disable_l3 && targets.annotations.is_empty();
    let tolerance = args.tolerance.unwrap_or(if l1_only { 1e-4 } else { 1e-3 });
    let opts = GradCheckOptions {
        samples: args.samples,
        seed: cfg.seed,
        corrupt_sign: args.corrupt_sign,
        ..GradCheckOptions::default()
    };
    let report: GradCheckReport = stage(
        "trainer",
        grad_check(&params, &batch, &targets, &nb, &loss, &opts),
    )?;
    println!("sampled entries: {}", report.checked);
    println!("kink crossings skipped: {}", report.kinks);
    println!("masked entries: {}", report.masked);
    println!("max relative error: {:.3e}", report.max_rel_error);
    println!("mean relative error: {:.3e}", report.mean_rel_error);
    println!("tolerance: {tolerance:.1e}");
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if report.passes(tolerance) {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::CheckFailed(format!(
            "max relative error {:.3e} exceeds {tolerance:.1e} over {} entries",
            report.max_rel_error, report.checked
        )))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with generator keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub neutral: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// annotation-free, scarce-annotation or domain-supervisor.
    #[arg(long, default_value = "annotation-free", value_parser = parse_setting)]
    pub setting: Setting,
    /// Annotated sample count for annotated settings; defaults to L.
    #[arg(long)]
    pub annotated: Option<usize>,
}

fn parse_setting(s: &str) -> std::result::Result<Setting, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| CliError::Validation(format!("synth config {}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! take {
        ($($f:ident),*) => {$( if let Some(v) = args.$f { cfg.$f = v; } )*};
    }
    take!(labels, n_train, n_test, clusters, noise, neutral, kappa, seed);
    let data = stage("synth", generate::<f64>(&cfg))?;
    let count = args.annotated.unwrap_or(cfg.labels);
    let supervision = data.supervision_for(args.setting, count, cfg.seed);
    stage("synth", data.write(&args.out, &supervision))?;
    write_json(&args.out.join("synth.json"), &cfg)?;
    println!(
        "wrote {} ({} train, {} test, L={}, kappa={})",
        args.out.display(),
        cfg.n_train,
        cfg.n_test,
        cfg.labels,
        data.supervision.kappa.unwrap_or_default()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for ablation.json and ablation.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: &'static str,
    pub disable_l2: bool,
    pub disable_l3: bool,
    pub metrics: MetricsReport<f64>,
}

pub const ABLATIONS: [(&str, bool, bool); 4] = [
    ("original", false, false),
    ("without L2", true, false),
    ("without L3", false, true),
    ("without L2 and L3", true, true),
];

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let base_cfg = args.run.resolve()?;
    let m = manifest(&args.manifest)?;
    let mut rows = Vec::new();
    let mut baseline = None;
    for (name, d2, d3) in ABLATIONS {
        let cfg = RunConfig {
            disable_l2: d2,
            disable_l3: d3,
            ..base_cfg
        };
        info!("ablation: {name}");
        let (ckpt, _) = fit(&m, &cfg, None)?;
        let report = evaluate(&m, &cfg, &ckpt.params)?;
        baseline.get_or_insert(report.baseline);
        rows.push(AblationRow {
            name,
            disable_l2: d2,
            disable_l3: d3,
            metrics: report.bncl,
        });
    }
    create_dir(&args.out)?;
    write_json(&args.out.join("ablation.json"), &rows)?;
    let baseline = baseline.expect("at least one ablation");
    let mut table_rows: Vec<(&str, &MetricsReport<f64>)> =
        rows.iter().map(|r| (r.name, &r.metrics)).collect();
    table_rows.push((BASELINE_ROW, &baseline));
    let table = text_table(&table_rows);
    write_text(&args.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
