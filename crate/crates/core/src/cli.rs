//! `fedvote` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{
    generate_blobs, load_dataset, partition_clients, save_dataset, write_file, Dataset,
};
use crate::ensemble::{load_ensemble, EnsembleModel, ENSEMBLE_FILE};
use crate::error::{Error, Result};
use crate::federation::{
    evaluate_ensemble, evaluate_model, run_to_dir, RunConfig, Strategy, CONFUSION_FILE,
    REPORT_FILE, ROUNDS_FILE,
};
use crate::metrics::confusion;
use crate::models::{load_model, BaseLearner, MODEL_FILE};
use crate::numerics::RngStream;

pub const SEED_ENV: &str = "FEDVOTE_SEED";

// Root-seed streams used by the standalone subcommands.
const STREAM_GENERATE: u64 = 1;
const STREAM_PARTITION: u64 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fedvote",
    version,
    about = "Ensemble-based federated learning simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic 4-class Gaussian blob dataset.
    Generate(GenerateArgs),
    /// Split a dataset into stratified client shards.
    Partition(PartitionArgs),
    /// Run a federated training experiment.
    Run(RunArgs),
    /// Score a model or ensemble checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Write per-sample predictions of a checkpoint.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// Falls back to $FEDVOTE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "data/blobs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub clients: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shards are written to `<out>/client-<i>`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    FedavgEnsemble,
    ModeOfClientEnsembles,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::FedavgEnsemble => Strategy::FedavgEnsemble,
            StrategyArg::ModeOfClientEnsembles => Strategy::ModeOfClientEnsembles,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train clients concurrently; results are identical to a sequential run.
    #[arg(long)]
    pub parallel_clients: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory holding `model.json` or `ensemble.json`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "evaluation")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A loaded checkpoint: one base model or a voting ensemble.
#[derive(Debug)]
pub enum Checkpoint {
    Model(BaseLearner),
    Ensemble(EnsembleModel),
}

impl Checkpoint {
    pub fn load(dir: &Path) -> Result<Self> {
        if dir.join(ENSEMBLE_FILE).is_file() {
            Ok(Checkpoint::Ensemble(load_ensemble(dir)?))
        } else if dir.join(MODEL_FILE).is_file() {
            Ok(Checkpoint::Model(load_model(dir)?))
        } else {
            Err(Error::io(
                dir,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no {MODEL_FILE} or {ENSEMBLE_FILE} here"),
                ),
            ))
        }
    }

    fn first(&self) -> &BaseLearner {
        match self {
            Checkpoint::Model(m) => m,
            Checkpoint::Ensemble(e) => &e.members()[0],
        }
    }

    /// Rejects datasets whose samples or classes the checkpoint cannot take.
    pub fn check_dataset(&self, d: &Dataset) -> Result<()> {
        let arch = self.first().architecture();
        if arch.input_len() != d.feature_len() || arch.num_classes != d.num_classes() {
            return Err(Error::shape(format!(
                "checkpoint expects input shape {:?} with {} classes, dataset has feature shape {:?} with {} classes",
                arch.input_shape,
                arch.num_classes,
                d.feature_shape(),
                d.num_classes()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, d: &Dataset) -> Result<Vec<usize>> {
        if d.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            Checkpoint::Model(m) => m.predict(d.features()),
            Checkpoint::Ensemble(e) => e.predict(d.features()),
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let seed = resolve_seed(args.seed)?;
    let d = generate_blobs(
        &mut RngStream::new(seed, STREAM_GENERATE),
        args.per_class as usize,
        args.dim as usize,
        args.separation,
    )?;
    save_dataset(&d, &args.out)?;
    println!("wrote {} samples to {}", d.len(), args.out.display());
    Ok(args.out.clone())
}

pub fn cmd_partition(args: &PartitionArgs) -> Result<Vec<PathBuf>> {
    let seed = resolve_seed(args.seed)?;
    let d = load_dataset(&args.dataset)?;
    let p = partition_clients(
        &d,
        args.clients as usize,
        &mut RngStream::new(seed, STREAM_PARTITION),
    )?;
    let mut dirs = Vec::with_capacity(p.num_clients());
    for (i, shard) in p.shards.iter().enumerate() {
        let dir = args.out.join(format!("client-{i}"));
        save_dataset(shard, &dir)?;
        println!(
            "client {i}: {} samples {:?}",
            shard.len(),
            shard.class_counts()
        );
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Config file (if any) with command-line overrides applied. The seed comes
/// from `--seed`, else the file's `seed` key, else `$FEDVOTE_SEED`, else 0.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let (mut cfg, file_has_seed) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let cfg = RunConfig::from_json(&text)?;
            let raw: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(vec![e.to_string()]))?;
            (cfg, raw.get("seed").is_some())
        }
        None => (RunConfig::default(), false),
    };
    cfg.seed = match args.seed {
        Some(s) => s,
        None if file_has_seed => cfg.seed,
        None => resolve_seed(None)?,
    };
    if let Some(c) = args.clients {
        cfg.clients = c;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s.into();
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if args.parallel_clients {
        cfg.parallel_clients = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = resolve_run_config(args)?;
    let summary = run_to_dir(&cfg)?;
    for r in &summary.records {
        println!(
            "round {}: global validation accuracy {:.4}, F1 {:.4} ({:.2?})",
            r.round, r.global_validation.accuracy, r.global_validation.f1, r.wall_time
        );
    }
    println!();
    print!("{}", summary.table);
    println!(
        "\nround log: {}",
        summary.output_dir.join(ROUNDS_FILE).display()
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.model)?;
    let d = load_dataset(&args.dataset)?;
    ckpt.check_dataset(&d)?;
    let report = match &ckpt {
        Checkpoint::Model(m) => evaluate_model(m, &d)?,
        Checkpoint::Ensemble(e) => evaluate_ensemble(e, &d)?,
    };
    let pred = ckpt.predict(&d)?;
    let cm = confusion(d.labels(), &pred, d.label_space())?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_file(
        &args.out.join(REPORT_FILE),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    write_file(&args.out.join(CONFUSION_FILE), cm.to_csv().as_bytes())?;
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  F1 {:.4}  loss {:.4}",
        report.accuracy, report.precision, report.recall, report.f1, report.mean_loss
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.model)?;
    let d = load_dataset(&args.dataset)?;
    ckpt.check_dataset(&d)?;
    let pred = ckpt.predict(&d)?;
    let names = d.label_space().names();
    let mut csv = String::from("index,predicted,class_name\n");
    for (i, &p) in pred.iter().enumerate() {
        csv.push_str(&format!("{i},{p},{}\n", names[p]));
    }
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(drop),
        Command::Partition(a) => cmd_partition(a).map(drop),
        Command::Run(a) => cmd_run(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
