//! Command line.
//!
//! `--config` takes a TOML file or a preset name (`shift`, `null_shift`);
//! without it the `shift` preset is used. `--seed` replaces the base seed and
//! `--trials` the trial count of the loaded config.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::data::{prepare, synth_two_domain, Dataset};
use crate::error::{Error, Result};
use crate::experiment::{
    self, emit_matrix, emit_report, matrix_configs, run_matrix, run_pair, table_csv, ExperimentConfig, ModelType,
    Unobserved, THRESHOLD,
};
use crate::metrics::{roc_auc, TrialMetrics};
use crate::selfcheck;

#[derive(Parser, Debug)]
#[command(name = "difl", version, about = "Domain invariant feature learning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file, or a preset name.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "INT")]
    trials: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write both synthetic domains as PGM images plus manifests.
    Synth,
    /// Train one model type on the configured pair and save a checkpoint.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Manifest to score in full; defaults to the target test split of
        /// the configured pair at `--seed`.
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Run all trials of the configured source → target pair.
    Experiment,
    /// Run every ordered pair of the configured datasets.
    Matrix,
    /// Finite-difference check of every graph operation.
    Gradcheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    LowerBaseline,
    UpperBaseline,
    Difl,
}

impl From<ModelArg> for ModelType {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::LowerBaseline => ModelType::LowerBaseline,
            ModelArg::UpperBaseline => ModelType::UpperBaseline,
            ModelArg::Difl => ModelType::Difl,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("difl: {}", one_line(&e.to_string()));
            1
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref().unwrap_or("shift"))?;
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gradcheck => {
            let base = cli.common.seed.unwrap_or(0);
            let results = selfcheck::run_all(base..base + 10)?;
            for case in selfcheck::CASES {
                let worst = results
                    .iter()
                    .filter(|r| r.case == case)
                    .map(|r| r.report.max_rel_error)
                    .fold(0.0, f64::max);
                println!("{case:<32} {worst:.3e}");
            }
            let max = selfcheck::max_error(&results);
            println!("max relative error {max:.3e} (tolerance {:.0e})", selfcheck::TOLERANCE);
            Ok(if max <= selfcheck::TOLERANCE { 0 } else { 1 })
        }
        Command::Synth => {
            let mut cfg = load_config(&cli.common)?;
            if let Some(seed) = cli.common.seed {
                cfg.synth.seed = seed;
            }
            let (a, b) = synth_two_domain(&cfg.synth)?;
            for (ds, sub) in [(&a, "domain_a"), (&b, "domain_b")] {
                let manifest = ds.materialize(&cfg.out.join(sub))?;
                println!("{} ({} images) -> {}", ds.name, ds.len(), manifest.display());
            }
            Ok(0)
        }
        Command::Train { model } => {
            let cfg = load_config(&cli.common)?;
            let model = ModelType::from(model);
            let seed = cfg.base_seed;
            let (source, target) = experiment::load_pair(&cfg)?;
            let started = Instant::now();
            let trained = experiment::train_one(&cfg, &source, &target, model, seed)?;
            create_dir(&cfg.out)?;
            let ckpt = cfg.out.join(format!("{}.json", model.key()));
            Checkpoint::of(&trained).save(&ckpt)?;
            let history = cfg.out.join(format!("{}_loss_history.csv", model.key()));
            trained.history.save_csv(&history)?;
            println!(
                "{model} seed {seed}: {} iterations over {} epochs in {:.1}s{}",
                trained.iterations,
                trained.epochs_run,
                started.elapsed().as_secs_f64(),
                trained
                    .converged_at
                    .map_or(String::new(), |i| format!(", converged at iteration {i}"))
            );
            println!("checkpoint -> {}", ckpt.display());
            Ok(0)
        }
        Command::Eval { checkpoint, manifest } => {
            let cfg = load_config(&cli.common)?;
            let extent = cfg.extent()?;
            let ckpt = Checkpoint::<f64>::load(&checkpoint)?;
            let set = match &manifest {
                Some(path) => {
                    let ds = Dataset::load_manifest(path)?;
                    let all: Vec<usize> = (0..ds.len()).collect();
                    prepare(&ds, &all, extent, |_| {})?
                }
                None => {
                    let (_, target) = experiment::load_pair(&cfg)?;
                    experiment::target_test(&cfg, &target, cfg.base_seed)?
                }
            };
            let scores = crate::training::predict_scores(&ckpt.generator, &ckpt.classifier, &set.images)?;
            let metrics = TrialMetrics::evaluate(&scores, &set.labels, THRESHOLD)?;
            let (_, auc) = roc_auc(&scores, &set.labels)?;
            let json = serde_json::json!({
                "checkpoint": checkpoint.display().to_string(),
                "examples": set.labels.len(),
                "threshold": THRESHOLD,
                "accuracy": metrics.accuracy,
                "sensitivity": metrics.sensitivity,
                "specificity": metrics.specificity,
                "auc": auc,
            });
            let text = serde_json::to_string_pretty(&json).expect("metrics serialize") + "\n";
            print!("{text}");
            if cli.common.out.is_some() {
                create_dir(&cfg.out)?;
                let path = cfg.out.join("eval_metrics.json");
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(0)
        }
        Command::Experiment => {
            let cfg = load_config(&cli.common)?;
            let started = Instant::now();
            let report = run_pair(&cfg, &Unobserved)?;
            emit_report(&report, &cfg.out)?;
            println!(
                "{} ({} trials, {:.1}s)",
                report.pair,
                cfg.trials,
                started.elapsed().as_secs_f64()
            );
            print!("{}", table_csv(&report));
            println!("report -> {}", cfg.out.display());
            Ok(0)
        }
        Command::Matrix => {
            let cfg = load_config(&cli.common)?;
            let cfgs = matrix_configs(&cfg)?;
            let results = run_matrix(&cfgs, &Unobserved);
            let table = emit_matrix(&results, &cfg.out)?;
            let mut failed = 0;
            for (c, r) in cfgs.iter().zip(&results) {
                if let Err(e) = r {
                    failed += 1;
                    eprintln!("difl: {} → {}: {}", c.source, c.target, one_line(&e.to_string()));
                }
            }
            print!("{}", std::fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?);
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}
