//! Three-model protocol over source → target pairs.
//!
//! Every trial splits both datasets 80:20 and trains a lower baseline
//! (source train), an upper baseline (target train) and a DIFL model
//! (labeled source train plus unlabeled target train), then scores all three
//! on the target test split. Test splits are read only after all training in
//! the trial has finished.

mod config;
mod report;

pub use config::{DatasetRef, ExperimentConfig, SynthDomain, PRESETS};
pub use report::{emit_matrix, emit_report, matrix_table, metrics_json, table_csv};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{prepare, split_80_20, Dataset, LabeledSet};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, roc_auc, MetricsReport, RocCurve, TrialMetrics};
use crate::rng;
use crate::training::{train_baseline, train_difl, LossHistory, TrainedModel, TrainingConfig};

/// Scores at or above this are called positive.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    LowerBaseline,
    UpperBaseline,
    Difl,
}

impl ModelType {
    pub const ALL: [ModelType; 3] = [ModelType::LowerBaseline, ModelType::UpperBaseline, ModelType::Difl];

    pub fn key(self) -> &'static str {
        match self {
            ModelType::LowerBaseline => "lower_baseline",
            ModelType::UpperBaseline => "upper_baseline",
            ModelType::Difl => "difl",
        }
    }

    /// Row label in result tables.
    pub fn table_name(self) -> &'static str {
        match self {
            ModelType::LowerBaseline => "Lower Baseline Model",
            ModelType::UpperBaseline => "Upper Baseline Model",
            ModelType::Difl => "DIFL Model",
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    TargetTest,
    SourceTest,
}

impl EvalSplit {
    pub fn key(self) -> &'static str {
        match self {
            EvalSplit::TargetTest => "target_test",
            EvalSplit::SourceTest => "source_test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Training,
    Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Test,
}

/// One image read by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Access {
    pub trial: usize,
    pub phase: Phase,
    pub side: Side,
    pub partition: Partition,
    /// Index into the full dataset.
    pub index: usize,
}

/// Sees every image read, in order. Used to audit test-split hygiene.
pub trait AccessObserver: Sync {
    fn record(&self, access: Access);
}

/// Observer that ignores everything.
pub struct Unobserved;

impl AccessObserver for Unobserved {
    fn record(&self, _: Access) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub model: ModelType,
    pub split: EvalSplit,
    pub metrics: TrialMetrics,
    pub roc: RocCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model: ModelType,
    pub iterations: usize,
    pub epochs_run: usize,
    pub converged_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub evaluations: Vec<Evaluation>,
    pub training: Vec<TrainingSummary>,
    pub difl_history: LossHistory,
}

impl TrialRun {
    pub fn evaluation(&self, model: ModelType, split: EvalSplit) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| e.model == model && e.split == split)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    /// `"X → Y"`.
    pub pair: String,
    pub source: String,
    pub target: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRun>,
    /// Target-test metrics per model type.
    pub lower_baseline: MetricsReport,
    pub upper_baseline: MetricsReport,
    pub difl: MetricsReport,
    /// Source-test metrics of the DIFL model and of the source-only model
    /// it should stay close to.
    pub difl_source: MetricsReport,
    pub lower_baseline_source: MetricsReport,
}

impl ExperimentReport {
    pub fn metrics(&self, model: ModelType, split: EvalSplit) -> Option<&MetricsReport> {
        match (model, split) {
            (ModelType::LowerBaseline, EvalSplit::TargetTest) => Some(&self.lower_baseline),
            (ModelType::UpperBaseline, EvalSplit::TargetTest) => Some(&self.upper_baseline),
            (ModelType::Difl, EvalSplit::TargetTest) => Some(&self.difl),
            (ModelType::Difl, EvalSplit::SourceTest) => Some(&self.difl_source),
            (ModelType::LowerBaseline, EvalSplit::SourceTest) => Some(&self.lower_baseline_source),
            (ModelType::UpperBaseline, EvalSplit::SourceTest) => None,
        }
    }

    /// `(model, split)` pairs carried by every report, in emission order.
    pub const EVALUATED: [(ModelType, EvalSplit); 5] = [
        (ModelType::LowerBaseline, EvalSplit::TargetTest),
        (ModelType::UpperBaseline, EvalSplit::TargetTest),
        (ModelType::Difl, EvalSplit::TargetTest),
        (ModelType::Difl, EvalSplit::SourceTest),
        (ModelType::LowerBaseline, EvalSplit::SourceTest),
    ];
}

pub fn pair_label(source: &str, target: &str) -> String {
    format!("{source} → {target}")
}

/// Labeled train and test tensors of one side of a trial.
pub struct SidePartitions {
    pub train: LabeledSet<f64>,
    pub test_indices: Vec<usize>,
}

/// Split seed of one side; source and target never share a permutation.
fn split_seed(seed: u64, side: Side) -> u64 {
    rng::derive(
        seed,
        match side {
            Side::Source => "split-source",
            Side::Target => "split-target",
        },
    )
}

/// Splits `ds` for trial `seed` and prepares only the train partition.
pub fn prepare_train(
    ds: &Dataset,
    side: Side,
    trial: usize,
    seed: u64,
    extent: usize,
    observer: &dyn AccessObserver,
) -> Result<SidePartitions> {
    let split = split_80_20(ds.len(), split_seed(seed, side))?;
    let train = prepare(ds, &split.train, extent, |index| {
        observer.record(Access {
            trial,
            phase: Phase::Training,
            side,
            partition: Partition::Train,
            index,
        })
    })?;
    Ok(SidePartitions {
        train,
        test_indices: split.test,
    })
}

fn prepare_test(
    ds: &Dataset,
    parts: &SidePartitions,
    side: Side,
    trial: usize,
    extent: usize,
    observer: &dyn AccessObserver,
) -> Result<LabeledSet<f64>> {
    prepare(ds, &parts.test_indices, extent, |index| {
        observer.record(Access {
            trial,
            phase: Phase::Evaluation,
            side,
            partition: Partition::Test,
            index,
        })
    })
}

fn with_seed(cfg: &TrainingConfig, seed: u64) -> TrainingConfig {
    TrainingConfig { seed, ..cfg.clone() }
}

pub fn evaluate(model: &TrainedModel<f64>, set: &LabeledSet<f64>) -> Result<(TrialMetrics, RocCurve)> {
    let scores = model.scores(&set.images)?;
    let metrics = TrialMetrics::evaluate(&scores, &set.labels, THRESHOLD)?;
    let (roc, _) = roc_auc(&scores, &set.labels)?;
    Ok((metrics, roc))
}

fn summary(model: ModelType, m: &TrainedModel<f64>) -> TrainingSummary {
    TrainingSummary {
        model,
        iterations: m.iterations,
        epochs_run: m.epochs_run,
        converged_at: m.converged_at,
    }
}

/// Trains the single model type `model` for trial seed `seed`.
pub fn train_one(
    cfg: &ExperimentConfig,
    source: &Dataset,
    target: &Dataset,
    model: ModelType,
    seed: u64,
) -> Result<TrainedModel<f64>> {
    let extent = cfg.extent()?;
    let arch = &cfg.architecture;
    match model {
        ModelType::LowerBaseline => {
            let s = prepare_train(source, Side::Source, 0, seed, extent, &Unobserved)?;
            train_baseline(&s.train, arch, &with_seed(&cfg.baseline, seed))
        }
        ModelType::UpperBaseline => {
            let t = prepare_train(target, Side::Target, 0, seed, extent, &Unobserved)?;
            train_baseline(&t.train, arch, &with_seed(&cfg.baseline, seed))
        }
        ModelType::Difl => {
            let s = prepare_train(source, Side::Source, 0, seed, extent, &Unobserved)?;
            let t = prepare_train(target, Side::Target, 0, seed, extent, &Unobserved)?;
            train_difl(&s.train, &t.train.without_labels(), arch, &with_seed(&cfg.difl, seed))
        }
    }
}

/// Target test split of trial seed `seed`, as `train_one` would hold it out.
pub fn target_test(cfg: &ExperimentConfig, target: &Dataset, seed: u64) -> Result<LabeledSet<f64>> {
    let extent = cfg.extent()?;
    let split = split_80_20(target.len(), split_seed(seed, Side::Target))?;
    prepare(target, &split.test, extent, |_| {})
}

pub fn run_trial(
    cfg: &ExperimentConfig,
    source: &Dataset,
    target: &Dataset,
    trial: usize,
    observer: &dyn AccessObserver,
) -> Result<TrialRun> {
    let seed = cfg.trial_seed(trial);
    let extent = cfg.extent()?;
    let arch = &cfg.architecture;
    let src = prepare_train(source, Side::Source, trial, seed, extent, observer)?;
    let tgt = prepare_train(target, Side::Target, trial, seed, extent, observer)?;

    let baseline_cfg = with_seed(&cfg.baseline, seed);
    let lower = train_baseline(&src.train, arch, &baseline_cfg)?;
    let upper = train_baseline(&tgt.train, arch, &baseline_cfg)?;
    let difl = train_difl(
        &src.train,
        &tgt.train.without_labels(),
        arch,
        &with_seed(&cfg.difl, seed),
    )?;

    let target_test = prepare_test(target, &tgt, Side::Target, trial, extent, observer)?;
    let source_test = prepare_test(source, &src, Side::Source, trial, extent, observer)?;
    let mut evaluations = Vec::new();
    for (model, split) in ExperimentReport::EVALUATED {
        let trained = match model {
            ModelType::LowerBaseline => &lower,
            ModelType::UpperBaseline => &upper,
            ModelType::Difl => &difl,
        };
        let set = match split {
            EvalSplit::TargetTest => &target_test,
            EvalSplit::SourceTest => &source_test,
        };
        let (metrics, roc) =
            evaluate(trained, set).map_err(|e| e.context(format!("evaluating {model} on {}", split.key())))?;
        evaluations.push(Evaluation {
            model,
            split,
            metrics,
            roc,
        });
    }
    Ok(TrialRun {
        trial,
        seed,
        evaluations,
        training: vec![
            summary(ModelType::LowerBaseline, &lower),
            summary(ModelType::UpperBaseline, &upper),
            summary(ModelType::Difl, &difl),
        ],
        difl_history: difl.history,
    })
}

/// Loads both datasets of the pair.
pub fn load_pair(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let source = cfg
        .source
        .load(&cfg.synth)
        .map_err(|e| e.context(format!("source {}", cfg.source)))?;
    let target = cfg
        .target
        .load(&cfg.synth)
        .map_err(|e| e.context(format!("target {}", cfg.target)))?;
    Ok((source, target))
}

/// Runs every trial of one pair; any failed trial fails the pair.
pub fn run_pair(cfg: &ExperimentConfig, observer: &dyn AccessObserver) -> Result<ExperimentReport> {
    cfg.validate()?;
    let refs = pair_label(&cfg.source.to_string(), &cfg.target.to_string());
    let (source, target) = load_pair(cfg).map_err(|e| e.context(format!("pair {refs}")))?;
    let pair = pair_label(&source.name, &target.name);
    let run = |t: usize| {
        run_trial(cfg, &source, &target, t, observer).map_err(|e| e.context(format!("pair {pair}, trial {t}")))
    };
    let trials: Vec<TrialRun> = if cfg.parallel {
        (0..cfg.trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..cfg.trials).map(run).collect::<Result<_>>()?
    };

    let collect = |model, split| -> Result<MetricsReport> {
        let per_trial: Vec<TrialMetrics> = trials
            .iter()
            .map(|t| {
                t.evaluation(model, split)
                    .expect("every trial evaluates every pair")
                    .metrics
            })
            .collect();
        aggregate(&per_trial)
    };
    Ok(ExperimentReport {
        lower_baseline: collect(ModelType::LowerBaseline, EvalSplit::TargetTest)?,
        upper_baseline: collect(ModelType::UpperBaseline, EvalSplit::TargetTest)?,
        difl: collect(ModelType::Difl, EvalSplit::TargetTest)?,
        difl_source: collect(ModelType::Difl, EvalSplit::SourceTest)?,
        lower_baseline_source: collect(ModelType::LowerBaseline, EvalSplit::SourceTest)?,
        pair,
        source: source.name,
        target: target.name,
        config: cfg.clone(),
        trials,
    })
}

/// One config per ordered pair of `cfg.datasets` (or of source and target
/// when that list is empty).
pub fn matrix_configs(cfg: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let datasets = if cfg.datasets.is_empty() {
        vec![cfg.source.clone(), cfg.target.clone()]
    } else {
        cfg.datasets.clone()
    };
    if datasets.len() < 2 {
        return Err(Error::Config("a matrix needs at least 2 datasets".into()));
    }
    for (i, a) in datasets.iter().enumerate() {
        if datasets[..i].contains(a) {
            return Err(Error::Config(format!("dataset {a} listed twice")));
        }
    }
    let mut out = Vec::new();
    for s in &datasets {
        for t in &datasets {
            if s != t {
                out.push(ExperimentConfig {
                    source: s.clone(),
                    target: t.clone(),
                    datasets: Vec::new(),
                    ..cfg.clone()
                });
            }
        }
    }
    Ok(out)
}

/// Runs every pair; a failing pair does not stop the others.
pub fn run_matrix(cfgs: &[ExperimentConfig], observer: &dyn AccessObserver) -> Vec<Result<ExperimentReport>> {
    cfgs.iter().map(|c| run_pair(c, observer)).collect()
}
