use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EvalSplit, ExperimentReport, ModelType, TrainingSummary};
use crate::error::{Error, Result};
use crate::metrics::{roc_svg, MetricsReport, Summary};

#[derive(Serialize)]
struct MetricsFile<'a> {
    pair: &'a str,
    source: &'a str,
    target: &'a str,
    base_seed: u64,
    trial_seeds: Vec<u64>,
    threshold: f64,
    records: Vec<Record>,
    aggregates: Vec<Aggregate>,
    training: Vec<TrainingRecord<'a>>,
}

#[derive(Serialize)]
struct Record {
    model: &'static str,
    split: &'static str,
    trial: usize,
    seed: u64,
    accuracy: f64,
    sensitivity: f64,
    specificity: f64,
    auc: f64,
}

#[derive(Serialize)]
struct Aggregate {
    model: &'static str,
    split: &'static str,
    trials: usize,
    accuracy: Summary,
    sensitivity: Summary,
    specificity: Summary,
    auc: Summary,
    accuracy_display: String,
}

#[derive(Serialize)]
struct TrainingRecord<'a> {
    trial: usize,
    #[serde(flatten)]
    summary: &'a TrainingSummary,
}

/// The machine-readable metrics file: one record per model type, split and
/// trial, then the aggregates.
pub fn metrics_json(report: &ExperimentReport) -> String {
    let mut records = Vec::new();
    let mut training = Vec::new();
    for t in &report.trials {
        for e in &t.evaluations {
            records.push(Record {
                model: e.model.key(),
                split: e.split.key(),
                trial: t.trial,
                seed: t.seed,
                accuracy: e.metrics.accuracy,
                sensitivity: e.metrics.sensitivity,
                specificity: e.metrics.specificity,
                auc: e.metrics.auc,
            });
        }
        for s in &t.training {
            training.push(TrainingRecord {
                trial: t.trial,
                summary: s,
            });
        }
    }
    let aggregates = ExperimentReport::EVALUATED
        .iter()
        .map(|&(model, split)| {
            let m: &MetricsReport = report.metrics(model, split).expect("evaluated pairs have metrics");
            Aggregate {
                model: model.key(),
                split: split.key(),
                trials: m.trial_count(),
                accuracy: m.accuracy,
                sensitivity: m.sensitivity,
                specificity: m.specificity,
                auc: m.auc,
                accuracy_display: m.accuracy.display(),
            }
        })
        .collect();
    let file = MetricsFile {
        pair: &report.pair,
        source: &report.source,
        target: &report.target,
        base_seed: report.config.base_seed,
        trial_seeds: report.trials.iter().map(|t| t.seed).collect(),
        threshold: super::THRESHOLD,
        records,
        aggregates,
        training,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("metrics serialize");
    text.push('\n');
    text
}

/// Target-test accuracy in the layout `Type of Model, Accuracy`.
pub fn table_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("Type of Model, Accuracy\n");
    for model in ModelType::ALL {
        let m = report
            .metrics(model, EvalSplit::TargetTest)
            .expect("target metrics present");
        s.push_str(&format!("{}, {}\n", model.table_name(), m.accuracy.display()));
    }
    s
}

/// Combined table over pairs: `Pair, Type of Model, Accuracy`.
pub fn matrix_table(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("Pair, Type of Model, Accuracy\n");
    for r in reports {
        for model in ModelType::ALL {
            let m = r.metrics(model, EvalSplit::TargetTest).expect("target metrics present");
            s.push_str(&format!(
                "{}, {}, {}\n",
                r.pair,
                model.table_name(),
                m.accuracy.display()
            ));
        }
    }
    s
}

fn manifest(report: &ExperimentReport) -> String {
    let seeds: Vec<String> = report.trials.iter().map(|t| t.seed.to_string()).collect();
    format!(
        "# {} {} run manifest\n# pair: {}\n# trial seeds: {}\n# rerun with: difl experiment --config <this file>\n\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        report.pair,
        seeds.join(", "),
        report.config.to_toml()
    )
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.json`, `table.csv`, one `roc_<model>.svg` per model type
/// (one curve per trial), `loss_history/difl_trial_NN.csv` and
/// `run_manifest.toml`. Returns the paths written.
pub fn emit_report(report: &ExperimentReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    let history_dir = outdir.join("loss_history");
    std::fs::create_dir_all(&history_dir).map_err(|e| Error::io(&history_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: &str| -> Result<()> {
        let path = outdir.join(name);
        write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    put("metrics.json", &metrics_json(report))?;
    put("table.csv", &table_csv(report))?;
    for model in ModelType::ALL {
        let curves: Vec<(String, &crate::metrics::RocCurve, f64)> = report
            .trials
            .iter()
            .map(|t| {
                let e = t
                    .evaluation(model, EvalSplit::TargetTest)
                    .expect("target evaluation present");
                (format!("trial {}", t.trial), &e.roc, e.metrics.auc)
            })
            .collect();
        let title = format!("{} on {} ({})", model.table_name(), report.target, report.pair);
        put(&format!("roc_{}.svg", model.key()), &roc_svg(&title, &curves))?;
    }
    put("run_manifest.toml", &manifest(report))?;
    for t in &report.trials {
        let path = history_dir.join(format!("difl_trial_{:02}.csv", t.trial));
        t.difl_history.save_csv(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn slug(pair: &str) -> String {
    pair.replace(" → ", "_to_")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Emits every successful pair into its own subdirectory plus
/// `matrix_table.csv` over all of them.
pub fn emit_matrix(results: &[Result<ExperimentReport>], outdir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let ok: Vec<&ExperimentReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    for r in &ok {
        emit_report(r, &outdir.join(slug(&r.pair)))?;
    }
    let path = outdir.join("matrix_table.csv");
    write(&path, &matrix_table(&ok))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slug_is_path_safe() {
        assert_eq!(slug("synthA → synthB"), "synthA_to_synthB");
        assert_eq!(slug("a b/c → d"), "a_b_c_to_d");
    }
}
