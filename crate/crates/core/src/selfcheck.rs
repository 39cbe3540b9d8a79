//! Finite-difference self-test of the autodiff engine.
//!
//! One case per graph operation plus the three loss composites through a
//! compact generator and head, each checked at a caller-chosen seed.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;

use crate::autodiff::{grad_check, GradCheckReport, Graph, NodeId, Tensor};
use crate::data::DomainLabel;
use crate::error::Result;
use crate::nn::{generate_features, head_scores, Architecture, Bound};
use crate::rng;
use crate::training::{classification_loss, discriminator_loss, generator_domain_loss, init_networks};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

pub const CASES: [&str; 17] = [
    "dense",
    "conv2d",
    "conv2d_stride2",
    "relu",
    "sigmoid",
    "log",
    "mean",
    "max_pool2",
    "reshape",
    "clamp",
    "add",
    "sub",
    "mul",
    "affine",
    "generator_classifier_l_c",
    "generator_discriminator_l_d",
    "generator_discriminator_l_g",
];

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub case: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Runs every case at every seed.
pub fn run_all(seeds: impl IntoIterator<Item = u64> + Clone) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for case in CASES {
        for seed in seeds.clone() {
            out.push(CaseResult {
                case,
                seed,
                report: run_case(case, seed)?,
            });
        }
    }
    Ok(out)
}

pub fn max_error(results: &[CaseResult]) -> f64 {
    results.iter().map(|r| r.report.max_rel_error).fold(0.0, f64::max)
}

fn uniform(n: usize, lo: f64, hi: f64, r: &mut rng::Rng) -> Vec<f64> {
    let d = Uniform::new(lo, hi);
    (0..n).map(|_| d.sample(r)).collect()
}

fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
    Tensor::new(data, shape).expect("case shapes are consistent")
}

/// Values bounded away from zero, so relu kinks sit far outside `±h`.
fn away_from_zero(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    uniform(n, -1.0, 1.0, r)
        .into_iter()
        .map(|v| v.signum() * (0.05 + v.abs()))
        .collect()
}

/// Distinct values on a coarse grid, so max-pool winners never swap.
fn distinct(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0).collect();
    v.shuffle(r);
    v
}

/// `mean(out * w)` for fixed random weights `w`, turning any output into a
/// scalar whose gradient exercises every element.
fn weighted_mean(g: &mut Graph<f64>, out: NodeId, r: &mut rng::Rng) -> Result<NodeId> {
    let shape = g.value(out).shape().to_vec();
    let n = g.value(out).len();
    let w = g.constant(tensor(uniform(n, -1.0, 1.0, r), &shape));
    let prod = g.mul(out, w)?;
    g.mean(prod)
}

type Case = (
    Vec<Tensor<f64>>,
    Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>>,
);

fn unary(point: Tensor<f64>, seed: u64, op: impl Fn(&mut Graph<f64>, NodeId) -> Result<NodeId> + 'static) -> Case {
    (
        vec![point],
        Box::new(move |g, p| {
            let out = op(g, p[0])?;
            weighted_mean(g, out, &mut rng::stream(seed, "weights"))
        }),
    )
}

fn binary(
    a: Tensor<f64>,
    b: Tensor<f64>,
    seed: u64,
    op: impl Fn(&mut Graph<f64>, NodeId, NodeId) -> Result<NodeId> + 'static,
) -> Case {
    (
        vec![a, b],
        Box::new(move |g, p| {
            let out = op(g, p[0], p[1])?;
            weighted_mean(g, out, &mut rng::stream(seed, "weights"))
        }),
    )
}

fn compact_architecture() -> Architecture {
    // 10 -> 8 -> 4 -> 2 -> 1 spatially
    Architecture::with_widths(10, 4, 3)
}

#[derive(Clone, Copy)]
enum Composite {
    Classification,
    Discriminator,
    Generator,
}

fn composite(kind: Composite, seed: u64) -> Result<Case> {
    let arch = compact_architecture();
    let (gen, cls, dis) = init_networks::<f64>(&arch, seed)?;
    let head = match kind {
        Composite::Classification => cls,
        Composite::Discriminator | Composite::Generator => dis,
    };
    let mut r = rng::stream(seed, "composite");
    let batch = 4;
    let x = tensor(uniform(batch * 100, -1.0, 1.0, &mut r), &[batch, 1, 10, 10]);
    let n_gen = gen.params.len();
    let point: Vec<Tensor<f64>> = gen.params.tensors().chain(head.params.tensors()).cloned().collect();
    let eps = 1e-7;
    let f = move |g: &mut Graph<f64>, p: &[NodeId]| -> Result<NodeId> {
        let gb = Bound {
            ids: p[..n_gen].to_vec(),
        };
        let hb = Bound {
            ids: p[n_gen..].to_vec(),
        };
        let xin = g.constant(x.clone());
        let feats = generate_features(g, &gen, &gb, xin)?;
        let scores = head_scores(g, &head, &hb, feats)?;
        match kind {
            Composite::Classification => classification_loss(g, scores, &[1, 0, 0, 1], eps),
            Composite::Discriminator => discriminator_loss(
                g,
                scores,
                &[
                    DomainLabel::Source,
                    DomainLabel::Source,
                    DomainLabel::Target,
                    DomainLabel::Target,
                ],
                eps,
            ),
            Composite::Generator => generator_domain_loss(g, scores, eps),
        }
    };
    Ok((point, Box::new(f)))
}

fn build_case(case: &str, seed: u64) -> Result<Case> {
    let mut r = rng::stream(seed, case);
    let case = match case {
        "dense" => {
            let x = tensor(uniform(3 * 4, -1.0, 1.0, &mut r), &[3, 4]);
            let w = tensor(uniform(4 * 5, -1.0, 1.0, &mut r), &[4, 5]);
            let b = tensor(uniform(5, -1.0, 1.0, &mut r), &[5]);
            (
                vec![x, w, b],
                Box::new(move |g: &mut Graph<f64>, p: &[NodeId]| {
                    let out = g.dense(p[0], p[1], p[2])?;
                    weighted_mean(g, out, &mut rng::stream(seed, "weights"))
                }) as Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>>,
            )
        }
        "conv2d" | "conv2d_stride2" => {
            let stride = if case == "conv2d" { 1 } else { 2 };
            let x = tensor(uniform(2 * 2 * 7 * 7, -1.0, 1.0, &mut r), &[2, 2, 7, 7]);
            let k = tensor(uniform(3 * 2 * 3 * 3, -1.0, 1.0, &mut r), &[3, 2, 3, 3]);
            binary(x, k, seed, move |g, a, b| g.conv2d(a, b, stride))
        }
        "relu" => unary(tensor(away_from_zero(12, &mut r), &[3, 4]), seed, |g, x| g.relu(x)),
        "sigmoid" => unary(tensor(uniform(12, -4.0, 4.0, &mut r), &[12]), seed, |g, x| g.sigmoid(x)),
        "log" => unary(tensor(uniform(12, 0.2, 3.0, &mut r), &[12]), seed, |g, x| g.log(x)),
        "mean" => (
            vec![tensor(uniform(15, -1.0, 1.0, &mut r), &[3, 5])],
            Box::new(|g: &mut Graph<f64>, p: &[NodeId]| g.mean(p[0])) as Box<_>,
        ),
        "max_pool2" => unary(tensor(distinct(2 * 3 * 5 * 4, &mut r), &[2, 3, 5, 4]), seed, |g, x| {
            g.max_pool2(x)
        }),
        "reshape" => unary(tensor(uniform(24, -1.0, 1.0, &mut r), &[2, 3, 4]), seed, |g, x| {
            let flat = g.flatten(x)?;
            g.reshape(flat, &[4, 6])
        }),
        "clamp" => {
            let v = uniform(16, -1.0, 1.0, &mut r)
                .into_iter()
                .map(|v: f64| if (v.abs() - 0.5).abs() < 0.05 { v * 0.8 } else { v })
                .collect();
            unary(tensor(v, &[16]), seed, |g, x| g.clamp(x, -0.5, 0.5))
        }
        "add" | "sub" | "mul" => {
            let a = tensor(uniform(10, -1.0, 1.0, &mut r), &[2, 5]);
            let b = tensor(uniform(10, -1.0, 1.0, &mut r), &[2, 5]);
            let name = case.to_string();
            binary(a, b, seed, move |g, x, y| match name.as_str() {
                "add" => g.add(x, y),
                "sub" => g.sub(x, y),
                _ => g.mul(x, y),
            })
        }
        "affine" => {
            let (s, t) = (uniform(1, -2.0, 2.0, &mut r)[0], uniform(1, -1.0, 1.0, &mut r)[0]);
            unary(tensor(uniform(9, -1.0, 1.0, &mut r), &[9]), seed, move |g, x| {
                g.affine(x, s, t)
            })
        }
        "generator_classifier_l_c" => composite(Composite::Classification, seed)?,
        "generator_discriminator_l_d" => composite(Composite::Discriminator, seed)?,
        "generator_discriminator_l_g" => composite(Composite::Generator, seed)?,
        other => return Err(crate::Error::Config(format!("unknown gradient check case `{other}`"))),
    };
    Ok(case)
}

pub fn run_case(case: &str, seed: u64) -> Result<GradCheckReport> {
    let (point, f) = build_case(case, seed)?;
    grad_check(|g, p| f(g, p), &point, STEP)
}
