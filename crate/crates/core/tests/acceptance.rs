//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Always exits 0 so that the workspace test run completes; read the lines.
//! Set `DIFL_REAL_DATA` to a config file listing real manifests under
//! `datasets` to run the optional real-data check.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use difl::autodiff::Tensor;
use difl::data::{Batch, DomainLabel, LabeledSet};
use difl::experiment::{
    emit_report, matrix_configs, run_matrix, run_pair, EvalSplit, ExperimentConfig, ExperimentReport, ModelType,
    Unobserved,
};
use difl::metrics::{accuracy, confusion, roc_auc, sensitivity, specificity};
use difl::nn::Architecture;
use difl::selfcheck;
use difl::training::{
    classification_loss, classification_step, discriminator_loss, discriminator_update, domain_invariance_step,
    generator_domain_loss, generator_update, init_networks, loss_value,
};
use rand::Rng;

const EPS: f64 = 1e-7;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let results = match selfcheck::run_all(0..10) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    let max = selfcheck::max_error(&results);
    let kinds = results
        .iter()
        .map(|r| r.case)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Outcome::new(
        max <= 1e-4 && elapsed < Duration::from_secs(60) && kinds == selfcheck::CASES.len(),
        format!(
            "{kinds} cases x 10 seeds, max relative error {max:.2e} (<= 1e-4), {} (< 60s)",
            secs(elapsed)
        ),
    )
}

fn scalar_cross_entropy(p: &[f64], t: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&p, &t) in p.iter().zip(t) {
        let p = p.clamp(EPS, 1.0 - EPS);
        sum += t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    -sum / p.len() as f64
}

fn l_g(p: &[f64]) -> f64 {
    loss_value(&Tensor::from_slice(p, &[p.len()]).unwrap(), |g, x| {
        generator_domain_loss(g, x, EPS)
    })
    .unwrap()
}

fn loss_oracles() -> Outcome {
    let mut r = difl::rng::stream(2024, "acceptance-losses");
    let mut worst: f64 = 0.0;
    let mut margin_violations = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..40);
        let p: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        let domains: Vec<DomainLabel> = labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    DomainLabel::Source
                } else {
                    DomainLabel::Target
                }
            })
            .collect();
        let t: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let pt = Tensor::from_slice(&p, &[n]).unwrap();
        let lc = loss_value(&pt, |g, x| classification_loss(g, x, &labels, EPS)).unwrap();
        let ld = loss_value(&pt, |g, x| discriminator_loss(g, x, &domains, EPS)).unwrap();
        let lg = l_g(&p);
        worst = worst
            .max((lc - scalar_cross_entropy(&p, &t)).abs())
            .max((ld - scalar_cross_entropy(&p, &t)).abs())
            .max((lg - scalar_cross_entropy(&p, &vec![0.5; n])).abs());
        if p.iter().any(|v| (v - 0.5).abs() > 1e-3) && lg <= LN_2 + 1e-6 {
            margin_violations += 1;
        }
    }
    let minimum_exact = [1, 2, 16, 64]
        .iter()
        .all(|&n| (l_g(&vec![0.5; n]) - LN_2).abs() < 1e-15);

    // Smallest deviation the margin claim covers, one score off, the rest at 0.5.
    let mut boundary = Vec::new();
    for n in 1..=4 {
        let mut p = vec![0.5; n];
        p[0] = 0.5 + 1.001e-3;
        let excess = l_g(&p) - LN_2;
        if excess <= 1e-6 {
            margin_violations += 1;
            boundary.push(format!("N={n} excess {excess:.2e}"));
        }
    }
    let detail = format!(
        "max oracle gap {worst:.1e} (<= 1e-12) over 1000 instances, minimum ln2 at 0.5: {}, margin violations {margin_violations}{}",
        if minimum_exact { "yes" } else { "no" },
        if boundary.is_empty() {
            String::new()
        } else {
            format!(" [{}]", boundary.join(", "))
        }
    );
    Outcome::new(worst <= 1e-12 && minimum_exact && margin_violations == 0, detail)
}

fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn metric_oracles() -> Outcome {
    let mut r = difl::rng::stream(2024, "acceptance-metrics");
    let (mut instances, mut worst, mut formula_mismatch, mut shape_violations) = (0, 0.0f64, 0, 0);
    while instances < 1000 {
        let n = r.gen_range(2..=50);
        let coarse = r.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    r.gen_range(0..8) as f64 / 8.0
                } else {
                    r.gen_range(0.0..1.0)
                }
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        instances += 1;
        let (roc, auc) = roc_auc(&scores, &labels).unwrap();
        worst = worst.max((auc - mann_whitney(&scores, &labels)).abs());
        let (first, last) = (&roc.points[0], roc.points.last().unwrap());
        let anchored = (first.fpr, first.tpr) == (0.0, 0.0) && (last.fpr, last.tpr) == (1.0, 1.0);
        let monotone = roc
            .points
            .windows(2)
            .all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        if !anchored || !monotone {
            shape_violations += 1;
        }
        let threshold = r.gen_range(0.0..1.0);
        let cm = confusion(&scores, &labels, threshold).unwrap();
        let (mut tp, mut tn) = (0usize, 0usize);
        for (&s, &l) in scores.iter().zip(&labels) {
            tp += (s >= threshold && l == 1) as usize;
            tn += (s < threshold && l == 0) as usize;
        }
        let pos = labels.iter().filter(|&&l| l == 1).count();
        let neg = n - pos;
        if accuracy(&cm).unwrap() != (tp + tn) as f64 / n as f64
            || sensitivity(&cm).unwrap() != tp as f64 / pos as f64
            || specificity(&cm).unwrap() != tn as f64 / neg as f64
        {
            formula_mismatch += 1;
        }
    }
    Outcome::new(
        worst <= 1e-12 && formula_mismatch == 0 && shape_violations == 0,
        format!(
            "{instances} instances, max |AUC - Mann-Whitney| {worst:.1e}, formula mismatches {formula_mismatch}, ROC shape violations {shape_violations}"
        ),
    )
}

fn step_isolation() -> Outcome {
    const EXTENT: usize = 12;
    let mut r = difl::rng::stream(2024, "acceptance-isolation");
    let (mut g, mut c, mut d) = init_networks::<f64>(&Architecture::with_widths(EXTENT, 8, 4), 2024).unwrap();
    let images = |n: usize, r: &mut difl::rng::Rng| {
        let data = (0..n * EXTENT * EXTENT).map(|_| r.gen_range(-1.0..1.0)).collect();
        Tensor::new(data, &[n, 1, EXTENT, EXTENT]).unwrap()
    };
    let mut violations = Vec::new();
    for step in 0..100 {
        let n = 4;
        let idx = [0, 1, 2, 3];
        let src = images(n, &mut r);
        let lr = r.gen_range(0.001..0.1);
        let (g0, c0, d0) = (g.clone(), c.clone(), d.clone());
        let ok = match step % 4 {
            0 => {
                let set = LabeledSet::new(src, vec![0, 1, 1, 0]).unwrap();
                classification_step(&mut g, &mut c, &set.batch(&idx, DomainLabel::Source), lr, EPS).unwrap();
                d.params.bitwise_eq(&d0.params)
            }
            kind => {
                let batch = Batch::mixed(&src, &idx[..2], &images(n, &mut r), &idx[..2]).unwrap();
                match kind {
                    1 => {
                        domain_invariance_step(&mut g, &mut d, &batch, lr, EPS).unwrap();
                        c.params.bitwise_eq(&c0.params)
                    }
                    2 => {
                        discriminator_update(&g, &mut d, &batch, lr, EPS).unwrap();
                        g.params.bitwise_eq(&g0.params)
                    }
                    _ => {
                        generator_update(&mut g, &d, &batch, lr, EPS).unwrap();
                        d.params.bitwise_eq(&d0.params)
                    }
                }
            }
        };
        if !ok {
            violations.push(step);
        }
    }
    Outcome::new(
        violations.is_empty(),
        format!("100 random steps, violations at {violations:?}"),
    )
}

fn target_accuracy(report: &ExperimentReport, model: ModelType) -> f64 {
    report.metrics(model, EvalSplit::TargetTest).unwrap().accuracy.mean
}

fn domain_shift(report: &difl::Result<ExperimentReport>, elapsed: Duration) -> Outcome {
    let report = match report {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("error: {e}")),
    };
    let lower = target_accuracy(report, ModelType::LowerBaseline);
    let upper = target_accuracy(report, ModelType::UpperBaseline);
    let difl = target_accuracy(report, ModelType::Difl);
    let difl_src = report.difl_source.accuracy.mean;
    let lower_src = report.lower_baseline_source.accuracy.mean;
    let checks = [
        upper >= 0.90,
        lower <= upper - 0.20,
        difl >= lower + 0.15,
        (difl_src - lower_src).abs() <= 0.10,
        elapsed <= Duration::from_secs(15 * 60),
    ];
    let mark = |b: bool| if b { "ok" } else { "MISS" };
    Outcome::new(
        checks.iter().all(|&b| b),
        format!(
            "upper {upper:.3} (>= 0.90 {}), lower {lower:.3} (<= upper-0.20 {}), DIFL {difl:.3} (>= lower+0.15 {}), \
             source DIFL {difl_src:.3} vs source-only {lower_src:.3} (within 0.10 {}), {} (<= 15 min {})",
            mark(checks[0]),
            mark(checks[1]),
            mark(checks[2]),
            mark(checks[3]),
            secs(elapsed),
            mark(checks[4]),
        ),
    )
}

fn null_shift(report: &difl::Result<ExperimentReport>) -> Outcome {
    let report = match report {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("error: {e}")),
    };
    let accs: Vec<f64> = ModelType::ALL.iter().map(|&m| target_accuracy(report, m)).collect();
    let spread = accs.iter().cloned().fold(f64::MIN, f64::max) - accs.iter().cloned().fold(f64::MAX, f64::min);
    Outcome::new(
        spread <= 0.05,
        format!(
            "lower {:.3}, upper {:.3}, DIFL {:.3}, spread {spread:.3} (<= 0.05)",
            accs[0], accs[1], accs[2]
        ),
    )
}

fn emitted(cfg: &ExperimentConfig, dir: &std::path::Path) -> difl::Result<(Vec<u8>, Vec<u8>)> {
    let report = run_pair(cfg, &Unobserved)?;
    emit_report(&report, dir)?;
    let read = |name: &str| std::fs::read(dir.join(name)).expect("emitted file");
    Ok((read("metrics.json"), read("table.csv")))
}

fn determinism(base: &ExperimentConfig) -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let serial = ExperimentConfig {
        trials: 2,
        parallel: false,
        ..base.clone()
    };
    let parallel = ExperimentConfig {
        parallel: true,
        ..serial.clone()
    };
    let runs = (|| -> difl::Result<_> {
        Ok((
            emitted(&serial, &dir.path().join("a"))?,
            emitted(&serial, &dir.path().join("b"))?,
            emitted(&parallel, &dir.path().join("c"))?,
        ))
    })();
    match runs {
        Ok((a, b, c)) => Outcome::new(
            a == b && a == c,
            format!(
                "2-trial shift runs: repeat identical {}, serial vs parallel identical {}",
                a == b,
                a == c
            ),
        ),
        Err(e) => Outcome::new(false, format!("error: {e}")),
    }
}

fn real_data() -> Option<Outcome> {
    let path = std::env::var("DIFL_REAL_DATA").ok()?;
    let run = || -> difl::Result<Outcome> {
        let mut cfg = ExperimentConfig::load(&path)?;
        cfg.trials = 3;
        let results = run_matrix(&matrix_configs(&cfg)?, &Unobserved);
        let mut better = Vec::new();
        for r in results.iter().flatten() {
            let (d, l) = (
                target_accuracy(r, ModelType::Difl),
                target_accuracy(r, ModelType::LowerBaseline),
            );
            if d > l {
                better.push(format!("{} ({d:.3} > {l:.3})", r.pair));
            }
        }
        Ok(Outcome::new(
            !better.is_empty(),
            format!("pairs where DIFL beats the lower baseline: {}", better.join("; ")),
        ))
    };
    Some(run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}"))))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!(
            "{} criterion {n} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report(1, "gradient correctness", gradient_correctness());
    report(2, "loss oracles", loss_oracles());
    report(3, "metric oracles", metric_oracles());
    report(4, "adversarial step isolation", step_isolation());

    let mut shift = ExperimentConfig::preset("shift").expect("preset");
    shift.trials = 5;
    let started = Instant::now();
    let shifted = run_pair(&shift, &Unobserved);
    report(5, "synthetic domain shift", domain_shift(&shifted, started.elapsed()));

    let mut null = ExperimentConfig::preset("null_shift").expect("preset");
    null.trials = 5;
    report(6, "null-shift control", null_shift(&run_pair(&null, &Unobserved)));

    report(7, "determinism", determinism(&shift));

    match real_data() {
        Some(o) => report(8, "real-data direction (non-gating)", o),
        None => println!("SKIP criterion 8 real-data direction (non-gating): DIFL_REAL_DATA not set"),
    }

    let gating: Vec<_> = results.iter().filter(|(n, _, _)| *n != 8).collect();
    let passed = gating.iter().filter(|(_, _, o)| o.pass).count();
    println!("acceptance: {passed}/{} gating criteria passed", gating.len());
}
