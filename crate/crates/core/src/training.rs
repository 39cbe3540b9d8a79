//! Adversarial losses and the alternating training procedure.
//!
//! Each iteration runs a label classification step on labeled source images
//! (updating G and C by the classification loss) followed by a domain
//! invariance step on a half-source, half-target batch (updating D by the
//! discriminator loss and G by the generator domain loss). All updates are
//! plain gradient descent.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::data::{batch_indices, mixed_batches, Batch, DomainLabel, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::nn::{generate_features, head_scores, Architecture, Network};
use crate::rng;
use crate::scalar::Scalar;

/// The discriminator output the generator aims for on every example.
pub const IDEAL_DOMAIN_LABEL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Classification learning rate.
    pub lr_classification: f64,
    /// Domain invariance learning rate.
    pub lr_domain_invariance: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Trailing iterations inspected by the convergence test; 0 disables it.
    pub convergence_window: usize,
    pub slope_tolerance: f64,
    pub invariance_tolerance: f64,
    /// Epochs that always run before convergence is tested.
    pub min_epochs: usize,
    pub seed: u64,
    pub clamp_eps: f64,
    pub classification_steps_per_invariance: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr_classification: 0.005,
            lr_domain_invariance: 0.002,
            batch_size: 32,
            epochs: 30,
            convergence_window: 50,
            slope_tolerance: 1e-4,
            invariance_tolerance: 0.05,
            min_epochs: 10,
            seed: 0,
            clamp_eps: 1e-7,
            classification_steps_per_invariance: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("training: {what}")));
        if !(self.lr_classification > 0.0) || !self.lr_classification.is_finite() {
            return bad("lr_classification must be positive");
        }
        if !(self.lr_domain_invariance > 0.0) || !self.lr_domain_invariance.is_finite() {
            return bad("lr_domain_invariance must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad("clamp_eps must lie in (0, 0.5)");
        }
        if self.classification_steps_per_invariance == 0 {
            return bad("classification_steps_per_invariance must be at least 1");
        }
        Ok(())
    }
}

fn clamp_probs<T: Scalar>(g: &mut Graph<T>, p: NodeId, eps: T) -> Result<NodeId> {
    g.clamp(p, eps, T::one() - eps)
}

/// `-(1/N) sum [t log p + (1 - t) log(1 - p)]` with `p` clamped to `[eps, 1 - eps]`.
fn bce<T: Scalar>(g: &mut Graph<T>, p: NodeId, targets: &[T], eps: T) -> Result<NodeId> {
    let n = g.value(p).len();
    if targets.len() != n || g.value(p).shape().len() != 1 {
        return Err(Error::shape(
            "binary cross entropy",
            g.value(p).shape(),
            &[targets.len()],
        ));
    }
    let pos = g.constant(Tensor::new(targets.to_vec(), &[n])?);
    let neg = g.constant(Tensor::new(targets.iter().map(|&t| T::one() - t).collect(), &[n])?);
    let pc = clamp_probs(g, p, eps)?;
    let log_p = g.log(pc)?;
    let one_minus = g.affine(pc, -T::one(), T::one())?;
    let log_q = g.log(one_minus)?;
    let a = g.mul(log_p, pos)?;
    let b = g.mul(log_q, neg)?;
    let terms = g.add(a, b)?;
    let mean = g.mean(terms)?;
    g.scale(mean, -T::one())
}

/// Classification loss of predicted labels against binary class labels.
pub fn classification_loss<T: Scalar>(g: &mut Graph<T>, predicted: NodeId, labels: &[u8], eps: T) -> Result<NodeId> {
    let targets: Vec<T> = labels.iter().map(|&l| T::of(l as f64)).collect();
    bce(g, predicted, &targets, eps)
}

/// Discriminator loss of predicted domain scores against domain labels.
pub fn discriminator_loss<T: Scalar>(
    g: &mut Graph<T>,
    predicted: NodeId,
    domains: &[DomainLabel],
    eps: T,
) -> Result<NodeId> {
    let targets: Vec<T> = domains.iter().map(|d| T::of(d.value() as f64)).collect();
    bce(g, predicted, &targets, eps)
}

/// Generator domain loss: cross entropy of predicted domain scores against
/// the constant ideal label 0.5. Minimized, at `ln 2`, when every score is 0.5.
pub fn generator_domain_loss<T: Scalar>(g: &mut Graph<T>, predicted: NodeId, eps: T) -> Result<NodeId> {
    let n = g.value(predicted).len();
    bce(g, predicted, &vec![T::of(IDEAL_DOMAIN_LABEL); n], eps)
}

/// Evaluates one of the loss builders on plain tensors.
pub fn loss_value<T: Scalar>(
    predicted: &Tensor<T>,
    build: impl FnOnce(&mut Graph<T>, NodeId) -> Result<NodeId>,
) -> Result<T> {
    let mut g = Graph::new();
    let p = g.constant(predicted.clone());
    let l = build(&mut g, p)?;
    Ok(g.value(l).data()[0])
}

/// Scores the generator+head pair on `images` in chunks, without gradients.
pub fn predict_scores<T: Scalar>(generator: &Network<T>, head: &Network<T>, images: &Tensor<T>) -> Result<Vec<T>> {
    const CHUNK: usize = 64;
    let n = images.shape()[0];
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let part = images.slice_rows(start, (start + CHUNK).min(n))?;
        out.extend_from_slice(crate::nn::predict_label(generator, head, &part)?.data());
    }
    Ok(out)
}

/// One gradient-descent update of G and C on a labeled source batch.
/// Returns the classification loss before the update.
pub fn classification_step<T: Scalar>(
    generator: &mut Network<T>,
    classifier: &mut Network<T>,
    batch: &Batch<T>,
    lr: T,
    eps: T,
) -> Result<T> {
    let labels = batch
        .labels
        .as_ref()
        .ok_or_else(|| Error::Contract("classification step needs class labels".into()))?;
    if batch.domains.iter().any(|&d| d != DomainLabel::Source) {
        return Err(Error::Contract(
            "classification step received a target-domain example".into(),
        ));
    }
    let mut g = Graph::new();
    let gb = generator.bind(&mut g, true);
    let cb = classifier.bind(&mut g, true);
    let x = g.constant(batch.images.clone());
    let feats = generate_features(&mut g, generator, &gb, x)?;
    let y_hat = head_scores(&mut g, classifier, &cb, feats)?;
    let loss = classification_loss(&mut g, y_hat, labels, eps)?;
    let value = g.value(loss).data()[0];

    let grads = g.backward(loss)?;
    let g_grads = generator.gradients(&gb, &grads);
    let c_grads = classifier.gradients(&cb, &grads);
    generator.params.sgd_step(&g_grads, lr);
    classifier.params.sgd_step(&c_grads, lr);
    Ok(value)
}

fn check_mixed<T: Scalar>(batch: &Batch<T>) -> Result<()> {
    let has = |d| batch.domains.contains(&d);
    if !has(DomainLabel::Source) || !has(DomainLabel::Target) {
        return Err(Error::Contract("domain invariance batch must hold both domains".into()));
    }
    Ok(())
}

struct InvarianceForward<T> {
    graph: Graph<T>,
    generator: crate::nn::Bound,
    discriminator: crate::nn::Bound,
    l_g: NodeId,
    l_d: NodeId,
}

fn invariance_forward<T: Scalar>(
    generator: &Network<T>,
    discriminator: &Network<T>,
    batch: &Batch<T>,
    eps: T,
) -> Result<InvarianceForward<T>> {
    check_mixed(batch)?;
    let mut g = Graph::new();
    let gb = generator.bind(&mut g, true);
    let db = discriminator.bind(&mut g, true);
    let x = g.constant(batch.images.clone());
    let feats = generate_features(&mut g, generator, &gb, x)?;
    let d_hat = head_scores(&mut g, discriminator, &db, feats)?;
    let l_d = discriminator_loss(&mut g, d_hat, &batch.domains, eps)?;
    let l_g = generator_domain_loss(&mut g, d_hat, eps)?;
    Ok(InvarianceForward {
        graph: g,
        generator: gb,
        discriminator: db,
        l_g,
        l_d,
    })
}

/// Updates D alone by the discriminator loss; G is read but never written.
pub fn discriminator_update<T: Scalar>(
    generator: &Network<T>,
    discriminator: &mut Network<T>,
    batch: &Batch<T>,
    lr: T,
    eps: T,
) -> Result<T> {
    let fwd = invariance_forward(generator, discriminator, batch, eps)?;
    let grads = fwd.graph.backward_wrt(fwd.l_d, &fwd.discriminator.ids)?;
    let d_grads = discriminator.gradients(&fwd.discriminator, &grads);
    discriminator.params.sgd_step(&d_grads, lr);
    Ok(fwd.graph.value(fwd.l_d).data()[0])
}

/// Updates G alone by the generator domain loss; D is read but never written.
pub fn generator_update<T: Scalar>(
    generator: &mut Network<T>,
    discriminator: &Network<T>,
    batch: &Batch<T>,
    lr: T,
    eps: T,
) -> Result<T> {
    let fwd = invariance_forward(generator, discriminator, batch, eps)?;
    let grads = fwd.graph.backward_wrt(fwd.l_g, &fwd.generator.ids)?;
    let g_grads = generator.gradients(&fwd.generator, &grads);
    generator.params.sgd_step(&g_grads, lr);
    Ok(fwd.graph.value(fwd.l_g).data()[0])
}

/// Both invariance sub-updates from one shared forward pass: D descends the
/// discriminator loss, G descends the generator domain loss, and both
/// gradients are taken at the pre-update parameters. Returns `(l_G, l_D)`.
pub fn domain_invariance_step<T: Scalar>(
    generator: &mut Network<T>,
    discriminator: &mut Network<T>,
    batch: &Batch<T>,
    lr: T,
    eps: T,
) -> Result<(T, T)> {
    let fwd = invariance_forward(generator, discriminator, batch, eps)?;
    let d_grads = fwd.graph.backward_wrt(fwd.l_d, &fwd.discriminator.ids)?;
    let g_grads = fwd.graph.backward_wrt(fwd.l_g, &fwd.generator.ids)?;
    let dg = discriminator.gradients(&fwd.discriminator, &d_grads);
    let gg = generator.gradients(&fwd.generator, &g_grads);
    discriminator.params.sgd_step(&dg, lr);
    generator.params.sgd_step(&gg, lr);
    let value = |id: NodeId| fwd.graph.value(id).data()[0];
    Ok((value(fwd.l_g), value(fwd.l_d)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Classification,
    DomainInvariance,
}

/// Per-step losses, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub classification: Vec<f64>,
    pub discriminator: Vec<f64>,
    pub generator: Vec<f64>,
    /// Iteration index of every classification step.
    pub classification_iteration: Vec<usize>,
}

impl LossHistory {
    /// Columns `iteration,step_kind,loss_name,value`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,step_kind,loss_name,value")?;
        let mut ci = 0;
        let iterations = self
            .generator
            .len()
            .max(self.classification_iteration.last().map_or(0, |&i| i + 1));
        for it in 0..iterations {
            while ci < self.classification.len() && self.classification_iteration[ci] == it {
                writeln!(out, "{it},classification,l_C,{}", self.classification[ci])?;
                ci += 1;
            }
            if it < self.generator.len() {
                writeln!(out, "{it},domain_invariance,l_D,{}", self.discriminator[it])?;
                writeln!(out, "{it},domain_invariance,l_G,{}", self.generator[it])?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Difl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub kind: ModelKind,
    pub generator: Network<T>,
    pub classifier: Network<T>,
    /// Present for adversarially trained models only.
    pub discriminator: Option<Network<T>>,
    pub config: TrainingConfig,
    pub history: LossHistory,
    pub iterations: usize,
    pub epochs_run: usize,
    pub converged_at: Option<usize>,
}

impl<T: Scalar> TrainedModel<T> {
    /// Class scores `C(G(x))` for every image.
    pub fn scores(&self, images: &Tensor<T>) -> Result<Vec<T>> {
        predict_scores(&self.generator, &self.classifier, images)
    }
}

/// Seeds for the three networks, shared by baseline and adversarial runs so
/// that model types differ only in training procedure.
pub fn init_networks<T: Scalar>(arch: &Architecture, seed: u64) -> Result<(Network<T>, Network<T>, Network<T>)> {
    arch.validate()?;
    Ok((
        Network::build(&arch.generator, rng::derive(seed, "generator"))?,
        Network::build(&arch.classifier, rng::derive(seed, "classifier"))?,
        Network::build(&arch.discriminator, rng::derive(seed, "discriminator"))?,
    ))
}

/// Least-squares slope of `ys` against their index.
pub fn trend(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn converged(cfg: &TrainingConfig, history: &LossHistory, adversarial: bool, epoch: usize) -> bool {
    let w = cfg.convergence_window;
    if w < 2 || epoch + 1 < cfg.min_epochs || history.classification.len() < w {
        return false;
    }
    let lc = &history.classification[history.classification.len() - w..];
    if trend(lc).abs() >= cfg.slope_tolerance {
        return false;
    }
    if adversarial {
        if history.generator.len() < w {
            return false;
        }
        let lg = &history.generator[history.generator.len() - w..];
        let mean = lg.iter().sum::<f64>() / w as f64;
        if (mean - std::f64::consts::LN_2).abs() >= cfg.invariance_tolerance {
            return false;
        }
    }
    true
}

/// Source-only (or target-only) training of G and C; D is never built.
pub fn train_baseline<T: Scalar>(
    train: &LabeledSet<T>,
    arch: &Architecture,
    cfg: &TrainingConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let (mut generator, mut classifier, _) = init_networks::<T>(arch, cfg.seed)?;
    let lr = T::of(cfg.lr_classification);
    let eps = T::of(cfg.clamp_eps);
    let mut history = LossHistory::default();
    let mut converged_at = None;
    let mut epochs_run = 0;
    let mut iteration = 0;
    'epochs: for epoch in 0..cfg.epochs {
        epochs_run += 1;
        for idx in batch_indices(
            train.len(),
            cfg.batch_size,
            rng::derive(cfg.seed, "classification"),
            epoch as u64,
        ) {
            let batch = train.batch(&idx, DomainLabel::Source);
            let l = classification_step(&mut generator, &mut classifier, &batch, lr, eps)?;
            history.classification.push(l.as_f64());
            history.classification_iteration.push(iteration);
            iteration += 1;
            if converged(cfg, &history, false, epoch) {
                converged_at = Some(iteration);
                break 'epochs;
            }
        }
    }
    Ok(TrainedModel {
        kind: ModelKind::Baseline,
        generator,
        classifier,
        discriminator: None,
        config: cfg.clone(),
        history,
        iterations: iteration,
        epochs_run,
        converged_at,
    })
}

/// Adversarial training on labeled source images and unlabeled target images.
///
/// An epoch is one pass of classification batches over the source set; the
/// mixed source/target stream cycles through its own epochs alongside.
pub fn train_difl<T: Scalar>(
    source: &LabeledSet<T>,
    target: &UnlabeledSet<T>,
    arch: &Architecture,
    cfg: &TrainingConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::Config("source and target sets must be non-empty".into()));
    }
    let (mut generator, mut classifier, mut discriminator) = init_networks::<T>(arch, cfg.seed)?;
    let lr_c = T::of(cfg.lr_classification);
    let lr_di = T::of(cfg.lr_domain_invariance);
    let eps = T::of(cfg.clamp_eps);
    let mixed_seed = rng::derive(cfg.seed, "mixed");

    let mut history = LossHistory::default();
    let mut mixed_epoch = 0u64;
    let mut mixed = mixed_batches(source.len(), target.len(), cfg.batch_size, mixed_seed, mixed_epoch).into_iter();
    let mut converged_at = None;
    let mut epochs_run = 0;
    let mut iteration = 0;

    'epochs: for epoch in 0..cfg.epochs {
        epochs_run += 1;
        let class_batches = batch_indices(
            source.len(),
            cfg.batch_size,
            rng::derive(cfg.seed, "classification"),
            epoch as u64,
        );
        for chunk in class_batches.chunks(cfg.classification_steps_per_invariance) {
            for idx in chunk {
                let batch = source.batch(idx, DomainLabel::Source);
                let l = classification_step(&mut generator, &mut classifier, &batch, lr_c, eps)?;
                history.classification.push(l.as_f64());
                history.classification_iteration.push(iteration);
            }

            let mb = match mixed.next() {
                Some(b) => b,
                None => {
                    mixed_epoch += 1;
                    mixed =
                        mixed_batches(source.len(), target.len(), cfg.batch_size, mixed_seed, mixed_epoch).into_iter();
                    mixed.next().expect("both sets are non-empty")
                }
            };
            let batch = Batch::mixed(&source.images, &mb.source, &target.images, &mb.target)?;
            let (l_g, l_d) = domain_invariance_step(&mut generator, &mut discriminator, &batch, lr_di, eps)?;
            history.generator.push(l_g.as_f64());
            history.discriminator.push(l_d.as_f64());
            iteration += 1;

            if converged(cfg, &history, true, epoch) {
                converged_at = Some(iteration);
                break 'epochs;
            }
        }
    }
    Ok(TrainedModel {
        kind: ModelKind::Difl,
        generator,
        classifier,
        discriminator: Some(discriminator),
        config: cfg.clone(),
        history,
        iterations: iteration,
        epochs_run,
        converged_at,
    })
}
