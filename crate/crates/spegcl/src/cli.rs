//! Command-line surface binding the library into reproducible runs.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! error, 4 theory verification failed. Every failure prints one
//! machine-parsable line on stderr (`spegcl: error exit=N kind=K: msg`).
//! Every command writes exactly one `manifest.json` into its output
//! directory; numeric artifacts are byte-identical across reruns with the
//! same seed and configuration (timestamps live only in manifests).
//!
//! A `--config FILE` flag loads flat JSON key/value defaults; explicit
//! flags override file values. The default output root comes from the
//! `SPEGCL_OUT` environment variable (falling back to `./spegcl_runs`).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::augment::{self, AugmentConfig};
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::eval::{self, AblationMode, FinetuneConfig, ALL_ABLATION_MODES};
use crate::graph::{self, Dataset};
use crate::linalg::Matrix;
use crate::manifest::{hash_hex, RunManifest};
use crate::objective::{LossConfig, LossMode, NegativePolicy};
use crate::spectral;
use crate::theory::{self, TheoryRunConfig};
use crate::trainer::{self, TrainConfig};

#[derive(Parser)]
#[command(
    name = "spegcl",
    version,
    about = "Spectral graph contrastive learning: training, evaluation, and numerical verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Self-supervised training on a dataset
    Train(TrainArgs),
    /// Numerically verify the loss limit, decay rate and bound sandwich
    VerifyTheory(VerifyArgs),
    /// Evaluate a checkpoint: frozen linear probe, or semi-supervised
    /// fine-tuning when --label-rate is given
    Eval(EvalArgs),
    /// Run the four-mode ablation grid and tabulate probe accuracies
    Ablate(AblateArgs),
    /// Dump a graph's features, band-filtered reconstructions and shifted
    /// magnitude spectrum as CSV
    InspectSpectrum(InspectArgs),
    /// Generate a synthetic two-class dataset in the TUDataset text format
    GenSynth(GenSynthArgs),
}

/// Shared dataset selector: `synth:sbm` or `tud:<root>:<NAME>`.
#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Dataset spec: "synth:sbm" (generated, see --sbm-*) or "tud:ROOT:NAME"
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 200)]
    sbm_graphs: usize,
    #[arg(long, default_value_t = 30)]
    sbm_nodes: usize,
    #[arg(long, default_value_t = 0.1)]
    sbm_p0: f64,
    #[arg(long, default_value_t = 0.3)]
    sbm_p1: f64,
    #[arg(long, default_value_t = 1.0)]
    sbm_noise: f64,
    #[arg(long, default_value_t = 7)]
    sbm_seed: u64,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        if self.dataset == "synth:sbm" {
            return graph::make_synthetic_sbm(
                self.sbm_graphs,
                self.sbm_nodes,
                self.sbm_p0,
                self.sbm_p1,
                self.sbm_noise,
                self.sbm_seed,
            );
        }
        if let Some(rest) = self.dataset.strip_prefix("tud:") {
            let (root, name) = rest.rsplit_once(':').ok_or_else(|| {
                Error::Argument(format!(
                    "dataset spec '{}' must be synth:sbm or tud:ROOT:NAME",
                    self.dataset
                ))
            })?;
            return graph::load_tudataset(Path::new(root), name);
        }
        Err(Error::Argument(format!(
            "dataset spec '{}' must be synth:sbm or tud:ROOT:NAME",
            self.dataset
        )))
    }

    fn describe(&self) -> serde_json::Value {
        if self.dataset == "synth:sbm" {
            json!({
                "spec": self.dataset,
                "graphs": self.sbm_graphs,
                "nodes": self.sbm_nodes,
                "p0": self.sbm_p0,
                "p1": self.sbm_p1,
                "noise": self.sbm_noise,
                "seed": self.sbm_seed,
            })
        } else {
            json!({ "spec": self.dataset })
        }
    }
}

/// Flat JSON config file; any present key becomes the default for the
/// matching flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    tau: Option<f64>,
    m_negatives: Option<usize>,
    loss_mode: Option<String>,
    negative_policy: Option<String>,
    symmetrize: Option<bool>,
    omega_node: Option<f64>,
    omega_edge: Option<f64>,
    radius_ratio: Option<f64>,
    augment_seed: Option<u64>,
    hidden_dims: Option<Vec<usize>>,
    emb_dim: Option<usize>,
    encoder: Option<String>,
    checkpoint_every: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Ingest(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::Argument(format!("config file {}: {e}", p.display()))
                })
            }
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Contrastive temperature
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    m_negatives: Option<usize>,
    /// nce | neg_only | align_only
    #[arg(long)]
    loss_mode: Option<String>,
    /// cross_view | cross_and_in_view
    #[arg(long)]
    negative_policy: Option<String>,
    #[arg(long)]
    symmetrize: Option<bool>,
    #[arg(long)]
    omega_node: Option<f64>,
    #[arg(long)]
    omega_edge: Option<f64>,
    #[arg(long)]
    radius_ratio: Option<f64>,
    #[arg(long)]
    augment_seed: Option<u64>,
    /// Comma-separated hidden widths, e.g. 32,32
    #[arg(long, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    emb_dim: Option<usize>,
    /// fourier | gcn | gin
    #[arg(long)]
    encoder: Option<String>,
    /// Write an intermediate checkpoint every N epochs (0 = final only)
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl TrainArgs {
    fn build_config(&self) -> Result<TrainConfig> {
        let file = FileConfig::load(self.config.as_ref())?;
        let d = TrainConfig::default();
        let loss_mode = match self.loss_mode.as_ref().or(file.loss_mode.as_ref()) {
            Some(s) => LossMode::parse(s)?,
            None => d.loss.mode,
        };
        let policy = match self.negative_policy.as_ref().or(file.negative_policy.as_ref()) {
            Some(s) => NegativePolicy::parse(s)?,
            None => d.loss.policy,
        };
        let kind = match self.encoder.as_ref().or(file.encoder.as_ref()) {
            Some(s) => EncoderKind::parse(s)?,
            None => d.kind,
        };
        Ok(TrainConfig {
            epochs: self.epochs.or(file.epochs).unwrap_or(d.epochs),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            learning_rate: self
                .learning_rate
                .or(file.learning_rate)
                .unwrap_or(d.learning_rate),
            adam_betas: d.adam_betas,
            adam_eps: d.adam_eps,
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            augment: AugmentConfig {
                omega_node: self.omega_node.or(file.omega_node).unwrap_or(d.augment.omega_node),
                omega_edge: self.omega_edge.or(file.omega_edge).unwrap_or(d.augment.omega_edge),
                radius_ratio: self
                    .radius_ratio
                    .or(file.radius_ratio)
                    .unwrap_or(d.augment.radius_ratio),
                seed: self.augment_seed.or(file.augment_seed).unwrap_or(d.augment.seed),
                ..d.augment
            },
            loss: LossConfig {
                tau: self.tau.or(file.tau).unwrap_or(d.loss.tau),
                m_negatives: self.m_negatives.or(file.m_negatives).unwrap_or(d.loss.m_negatives),
                mode: loss_mode,
                policy,
                symmetrize: self.symmetrize.or(file.symmetrize).unwrap_or(d.loss.symmetrize),
            },
            hidden_dims: self
                .hidden_dims
                .clone()
                .or(file.hidden_dims)
                .unwrap_or(d.hidden_dims),
            emb_dim: self.emb_dim.or(file.emb_dim).unwrap_or(d.emb_dim),
            kind,
            checkpoint_every: self
                .checkpoint_every
                .or(file.checkpoint_every)
                .unwrap_or(d.checkpoint_every),
        })
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Temperature for the convergence curves
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Comma-separated negative counts for the deviation curve
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 100, 1000, 10000])]
    m_values: Vec<usize>,
    /// Trials per curve point
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Trials for the nested limit estimate
    #[arg(long, default_value_t = 1000)]
    limit_trials: usize,
    /// Draws for the bound-sandwich check
    #[arg(long, default_value_t = 10000)]
    draws: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k_folds: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// When set, fine-tune at this stratified label rate instead of the
    /// frozen probe
    #[arg(long)]
    label_rate: Option<f64>,
    /// Fine-tuning epochs (only with --label-rate)
    #[arg(long, default_value_t = 60)]
    finetune_epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    finetune_lr: f64,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to one mode: pos_and_neg | no_neg | no_pos | no_fouriergnn
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    k_folds: usize,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which graph to inspect
    #[arg(long, default_value_t = 0)]
    graph: usize,
    /// Low-frequency radius ratio for the band split
    #[arg(long, default_value_t = 0.5)]
    radius_ratio: f64,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset name used in the file prefix
    #[arg(long, default_value = "SYNTH")]
    name: String,
    #[arg(long, default_value_t = 200)]
    graphs: usize,
    #[arg(long, default_value_t = 30)]
    nodes: usize,
    #[arg(long, default_value_t = 0.1)]
    p0: f64,
    #[arg(long, default_value_t = 0.3)]
    p1: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::InsufficientData(_) => 1,
        Error::Ingest(_) | Error::Format { .. } | Error::Stratification(_) | Error::Io(_) => 2,
        Error::State(_) | Error::Numeric(_) => 3,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Argument(_) => "argument",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Ingest(_) => "ingest",
        Error::Format { .. } => "format",
        Error::Stratification(_) => "stratification",
        Error::Io(_) => "io",
        Error::State(_) => "state",
        Error::Numeric(_) => "numeric",
    }
}

fn out_dir(explicit: Option<&PathBuf>, command: &str) -> PathBuf {
    match explicit {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var("SPEGCL_OUT").unwrap_or_else(|_| "spegcl_runs".into());
            Path::new(&root).join(command)
        }
    }
}

fn write_matrix_csv(path: &Path, schema: &str, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {schema}\n"));
    for r in 0..m.rows() {
        let cells: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Entry point used by the binary: parse `std::env::args`, run, return the
/// process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::VerifyTheory(args) => cmd_verify_theory(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::InspectSpectrum(args) => cmd_inspect_spectrum(args),
        Command::GenSynth(args) => cmd_gen_synth(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("spegcl: error exit={code} kind={}: {e}", error_kind(&e));
            code
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let t0 = Instant::now();
    let cfg = args.build_config()?;
    let dataset = args.data.load()?;
    cfg.validate(dataset.len())?;
    let dir = out_dir(args.out.as_ref(), "train");
    fs::create_dir_all(&dir)?;

    let mut manifest = RunManifest::new(
        "train",
        cfg.seed,
        &json!({ "train": &cfg, "dataset": args.data.describe() }),
    );
    manifest.config_hash = hash_hex(cfg.hash());

    // Segmented training so intermediate checkpoints hit disk at the
    // requested cadence; each segment resumes the previous bit-exactly.
    let mut waypoints: Vec<usize> = Vec::new();
    if cfg.checkpoint_every > 0 {
        let mut e = cfg.checkpoint_every;
        while e < cfg.epochs {
            waypoints.push(e);
            e += cfg.checkpoint_every;
        }
    }
    waypoints.push(cfg.epochs);

    let mut resume = None;
    let mut stats = Vec::new();
    let mut checkpoint = None;
    for &target in &waypoints {
        let mut seg_cfg = cfg.clone();
        seg_cfg.epochs = target;
        let (cp, mut seg_stats) = trainer::train_from(&dataset, &seg_cfg, resume.take())?;
        stats.append(&mut seg_stats);
        if target < cfg.epochs {
            let path = dir.join(format!("checkpoint_epoch_{target}.bin"));
            cp.save(&path)?;
            manifest.outputs.push(path.display().to_string());
        }
        resume = Some(cp.clone());
        checkpoint = Some(cp);
    }
    let checkpoint = checkpoint.expect("at least one segment ran");

    let ckpt_path = dir.join("checkpoint.bin");
    checkpoint.save(&ckpt_path)?;
    let history_path = dir.join("history.csv");
    let mut csv = String::from("# schema: spegcl.history.v1\n");
    csv.push_str(&trainer::history_csv(&stats));
    fs::write(&history_path, csv)?;

    manifest.outputs.push(ckpt_path.display().to_string());
    manifest.outputs.push(history_path.display().to_string());
    manifest.epoch_wall_ms = stats.iter().map(|s| s.wall_ms).collect();
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;
    println!(
        "trained {} epochs on {} graphs; final mean loss {:.6}; outputs in {}",
        cfg.epochs,
        dataset.len(),
        checkpoint.loss_history.last().copied().unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(0)
}

fn cmd_verify_theory(args: VerifyArgs) -> Result<i32> {
    let t0 = Instant::now();
    if args.m_values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "the decay fit needs at least 4 m-values, got {:?}",
            args.m_values
        )));
    }
    let cfg = TheoryRunConfig {
        tau_curve: args.tau,
        m_values: args.m_values.clone(),
        curve_trials: args.trials,
        limit_trials: args.limit_trials,
        prop1_draws: args.draws,
        seed: args.seed,
        ..TheoryRunConfig::default()
    };
    let dir = out_dir(args.out.as_ref(), "verify-theory");
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new("verify-theory", args.seed, &cfg);

    let report = theory::run_verification(&cfg)?;
    for c in &report.checks {
        println!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }

    for cr in &report.curves {
        let path = dir.join(format!("curve_{}.csv", cr.curve.loss));
        let mut csv = String::from("# schema: spegcl.curve.v1\n");
        csv.push_str(&cr.curve.to_csv());
        fs::write(&path, csv)?;
        manifest.outputs.push(path.display().to_string());
    }
    let summary = json!({
        "limit": report.mc_limit.value,
        "limit_stderr": report.mc_limit.stderr,
        "closed_form_limit": report.closed_form_limit,
        "slope": report.curves.iter().filter_map(|c| c.fit.as_ref().map(|f| f.slope)).collect::<Vec<_>>(),
        "r2": report.curves.iter().filter_map(|c| c.fit.as_ref().map(|f| f.r_squared)).collect::<Vec<_>>(),
        "violations": report.prop1.iter().map(|p| p.lower_violations + p.upper_violations).sum::<usize>(),
        "checks": report.checks,
        "pass": report.pass,
    });
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())?;
    manifest.outputs.push(summary_path.display().to_string());
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;

    if report.pass {
        println!("theory verification passed; outputs in {}", dir.display());
        Ok(0)
    } else {
        eprintln!("spegcl: error exit=4 kind=theory: verification failed, see {}", dir.display());
        Ok(4)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let t0 = Instant::now();
    let dataset = args.data.load()?;
    let checkpoint = trainer::Checkpoint::load(&args.checkpoint)?;
    let dir = out_dir(args.out.as_ref(), "eval");
    fs::create_dir_all(&dir)?;

    let report = match args.label_rate {
        None => {
            let embeddings = eval::embed_dataset(&dataset, &checkpoint.params, 64)?;
            eval::linear_probe(&embeddings, &dataset.labels(), args.k_folds, args.seed)?
        }
        Some(rate) => {
            let cfg = FinetuneConfig {
                epochs: args.finetune_epochs,
                learning_rate: args.finetune_lr,
                k_folds: args.k_folds,
                seed: args.seed,
                ..FinetuneConfig::default()
            };
            eval::semi_supervised_finetune(&dataset, &checkpoint, rate, &cfg)?
        }
    };

    let mut manifest = RunManifest::new(
        "eval",
        args.seed,
        &json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "dataset": args.data.describe(),
            "k_folds": args.k_folds,
            "label_rate": args.label_rate,
        }),
    );
    manifest.config_hash = report.config_hash.clone();
    let report_path = dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap())?;
    manifest.outputs.push(report_path.display().to_string());
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;
    println!(
        "{}: mean accuracy {:.4} +- {:.4} over {} folds; report in {}",
        report.mode,
        report.mean,
        report.std,
        report.fold_accuracies.len(),
        dir.display()
    );
    Ok(0)
}

fn cmd_ablate(args: AblateArgs) -> Result<i32> {
    let t0 = Instant::now();
    let dataset = args.data.load()?;
    let dir = out_dir(args.out.as_ref(), "ablate");
    fs::create_dir_all(&dir)?;

    let modes: Vec<AblationMode> = match &args.mode {
        Some(m) => vec![AblationMode::parse(m)?],
        None => ALL_ABLATION_MODES.to_vec(),
    };
    let base = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        ..TrainConfig::default()
    };
    base.validate(dataset.len())?;

    let mut manifest = RunManifest::new(
        "ablate",
        args.seed,
        &json!({ "base": &base, "dataset": args.data.describe(), "modes": modes }),
    );

    let mut csv = String::from(
        "# schema: spegcl.ablation.v1\nmode,label,mean,std,first_loss,last_loss,mean_pairwise_similarity\n",
    );
    for mode in modes {
        let outcome = eval::ablation_run(&dataset, mode, &base, args.k_folds, args.seed)?;
        let first = outcome.loss_history.first().copied().unwrap_or(f64::NAN);
        let last = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            mode.as_str(),
            mode.label(),
            outcome.report.mean,
            outcome.report.std,
            first,
            last,
            outcome.mean_pairwise_similarity
        ));
        let path = dir.join(format!("report_{}.json", mode.as_str()));
        fs::write(&path, serde_json::to_string_pretty(&outcome.report).unwrap())?;
        manifest.outputs.push(path.display().to_string());
        println!(
            "{:<14} ({}): accuracy {:.4} +- {:.4}, loss {:.4} -> {:.4}, mean pairwise sim {:.4}",
            mode.as_str(),
            mode.label(),
            outcome.report.mean,
            outcome.report.std,
            first,
            last,
            outcome.mean_pairwise_similarity
        );
    }
    let table_path = dir.join("ablation.csv");
    fs::write(&table_path, csv)?;
    manifest.outputs.push(table_path.display().to_string());
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;
    Ok(0)
}

fn cmd_inspect_spectrum(args: InspectArgs) -> Result<i32> {
    let t0 = Instant::now();
    let dataset = args.data.load()?;
    if args.graph >= dataset.len() {
        return Err(Error::Argument(format!(
            "graph index {} outside dataset of {}",
            args.graph,
            dataset.len()
        )));
    }
    let dir = out_dir(args.out.as_ref(), "inspect-spectrum");
    fs::create_dir_all(&dir)?;
    let features = dataset.graph(args.graph).features().clone();

    let low = augment::low_pass_features(&features, args.radius_ratio)?;
    let high = augment::high_pass_features(&features, args.radius_ratio)?;
    let shifted = spectral::fshift(&spectral::dft2(&features)?)?;
    let magnitude = spectral::amplitude_phase(&shifted).magnitude;

    let mut manifest = RunManifest::new(
        "inspect-spectrum",
        0,
        &json!({
            "dataset": args.data.describe(),
            "graph": args.graph,
            "radius_ratio": args.radius_ratio,
        }),
    );
    for (name, matrix) in [
        ("original", &features),
        ("low_pass", &low),
        ("high_pass", &high),
        ("magnitude", &magnitude),
    ] {
        let path = dir.join(format!("{name}.csv"));
        write_matrix_csv(&path, &format!("spegcl.spectrum.{name}.v1"), matrix)?;
        manifest.outputs.push(path.display().to_string());
    }
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;
    println!(
        "wrote original/low_pass/high_pass/magnitude grids for graph {} to {}",
        args.graph,
        dir.display()
    );
    Ok(0)
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<i32> {
    let t0 = Instant::now();
    let dataset = graph::make_synthetic_sbm(
        args.graphs, args.nodes, args.p0, args.p1, args.noise, args.seed,
    )?;
    let dir = out_dir(args.out.as_ref(), "gen-synth");
    fs::create_dir_all(&dir)?;
    graph::save_tudataset(&dataset, &dir, &args.name)?;
    let mut manifest = RunManifest::new(
        "gen-synth",
        args.seed,
        &json!({
            "name": args.name,
            "graphs": args.graphs,
            "nodes": args.nodes,
            "p0": args.p0,
            "p1": args.p1,
            "noise": args.noise,
        }),
    );
    for suffix in ["A", "graph_indicator", "graph_labels", "node_attributes"] {
        manifest
            .outputs
            .push(dir.join(format!("{}_{suffix}.txt", args.name)).display().to_string());
    }
    manifest.wall_ms = t0.elapsed().as_millis();
    manifest.write(&dir)?;
    println!(
        "generated {} graphs ({} nodes each) as {} in {}",
        args.graphs,
        args.nodes,
        args.name,
        dir.display()
    );
    Ok(0)
}
