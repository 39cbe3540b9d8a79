use std::f64::consts::LN_2;

use difl::autodiff::Tensor;
use difl::data::{Batch, DomainLabel, LabeledSet};
use difl::metrics::TrialMetrics;
use difl::nn::Architecture;
use difl::training::{
    classification_step, discriminator_update, domain_invariance_step, generator_update, init_networks, predict_scores,
    train_baseline, train_difl, TrainingConfig,
};
use rand::Rng;

const EPS: f64 = 1e-7;
const EXTENT: usize = 10;

fn arch() -> Architecture {
    Architecture::with_widths(EXTENT, 6, 4)
}

fn random_images(n: usize, r: &mut impl Rng) -> Tensor<f64> {
    let data = (0..n * EXTENT * EXTENT).map(|_| r.gen_range(-1.0..1.0)).collect();
    Tensor::new(data, &[n, 1, EXTENT, EXTENT]).unwrap()
}

#[test]
fn hundred_random_steps_leave_the_other_side_bit_identical() {
    let mut r = difl::rng::stream(5, "isolation");
    let (mut g, mut c, mut d) = init_networks::<f64>(&arch(), 5).unwrap();
    for step in 0..100 {
        let n = r.gen_range(2..6);
        let images = random_images(n, &mut r);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let source = LabeledSet::new(images.clone(), labels).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let mixed = Batch::mixed(&images, &idx[..n / 2 + 1], &random_images(n, &mut r), &idx[..n / 2 + 1]).unwrap();
        let lr = r.gen_range(0.001..0.1);
        let (g0, c0, d0) = (g.clone(), c.clone(), d.clone());
        match step % 4 {
            0 => {
                classification_step(&mut g, &mut c, &source.batch(&idx, DomainLabel::Source), lr, EPS).unwrap();
                assert!(d.params.bitwise_eq(&d0.params), "step {step}: classification touched D");
                assert!(
                    !c.params.bitwise_eq(&c0.params),
                    "step {step}: classification left C alone"
                );
            }
            1 => {
                domain_invariance_step(&mut g, &mut d, &mixed, lr, EPS).unwrap();
                assert!(c.params.bitwise_eq(&c0.params), "step {step}: invariance touched C");
                assert!(!d.params.bitwise_eq(&d0.params), "step {step}: invariance left D alone");
            }
            2 => {
                discriminator_update(&g, &mut d, &mixed, lr, EPS).unwrap();
                assert!(g.params.bitwise_eq(&g0.params), "step {step}: l_D update touched G");
                assert!(c.params.bitwise_eq(&c0.params));
            }
            _ => {
                generator_update(&mut g, &d, &mixed, lr, EPS).unwrap();
                assert!(d.params.bitwise_eq(&d0.params), "step {step}: l_G update touched D");
                assert!(c.params.bitwise_eq(&c0.params));
            }
        }
    }
}

#[test]
fn shared_invariance_step_equals_both_sub_updates_from_the_same_start() {
    let mut r = difl::rng::stream(9, "shared");
    let (g, _, d) = init_networks::<f64>(&arch(), 9).unwrap();
    let idx = [0, 1, 2];
    let batch = Batch::mixed(&random_images(3, &mut r), &idx, &random_images(3, &mut r), &idx).unwrap();
    let (mut g1, mut d1) = (g.clone(), d.clone());
    domain_invariance_step(&mut g1, &mut d1, &batch, 0.05, EPS).unwrap();
    let (mut g2, mut d2) = (g.clone(), d.clone());
    discriminator_update(&g, &mut d2, &batch, 0.05, EPS).unwrap();
    generator_update(&mut g2, &d, &batch, 0.05, EPS).unwrap();
    assert!(g1.params.bitwise_eq(&g2.params));
    assert!(d1.params.bitwise_eq(&d2.params));
}

#[test]
fn classification_loss_strictly_falls_for_ten_steps() {
    let mut r = difl::rng::stream(2, "descent");
    let (mut g, mut c, _) = init_networks::<f64>(&arch(), 2).unwrap();
    let set = LabeledSet::new(random_images(6, &mut r), vec![0, 1, 0, 1, 1, 0]).unwrap();
    let batch = set.batch(&[0, 1, 2, 3, 4, 5], DomainLabel::Source);
    let losses: Vec<f64> = (0..11)
        .map(|_| classification_step(&mut g, &mut c, &batch, 0.05, EPS).unwrap())
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

/// Source images dark, target images bright: features separate by domain.
fn domain_separable_batch(r: &mut impl Rng) -> Batch<f64> {
    let shifted = |offset: f64, r: &mut dyn rand::RngCore| {
        let data = (0..4 * EXTENT * EXTENT)
            .map(|_| offset + 0.1 * r.gen_range(-1.0..1.0))
            .collect();
        Tensor::new(data, &[4, 1, EXTENT, EXTENT]).unwrap()
    };
    let idx = [0, 1, 2, 3];
    Batch::mixed(&shifted(-0.8, r), &idx, &shifted(0.8, r), &idx).unwrap()
}

#[test]
fn frozen_generator_lets_discriminator_separate_domains() {
    let mut r = difl::rng::stream(4, "freeze-g");
    let (g, _, mut d) = init_networks::<f64>(&arch(), 4).unwrap();
    let batch = domain_separable_batch(&mut r);
    let g0 = g.clone();
    let mut last = f64::INFINITY;
    for _ in 0..1000 {
        last = discriminator_update(&g, &mut d, &batch, 0.05, EPS).unwrap();
    }
    assert!(g.params.bitwise_eq(&g0.params));
    assert!(last < 0.05, "l_D = {last}");
}

#[test]
fn frozen_discriminator_lets_generator_reach_ln2() {
    let mut r = difl::rng::stream(4, "freeze-d");
    let (mut g, _, d) = init_networks::<f64>(&arch(), 4).unwrap();
    let batch = domain_separable_batch(&mut r);
    let first = generator_update(&mut g, &d, &batch, 0.05, EPS).unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = generator_update(&mut g, &d, &batch, 0.05, EPS).unwrap();
    }
    assert!(last <= first);
    assert!((last - LN_2).abs() < 0.05, "l_G = {last}");
}

/// Class 1 lights the top half, class 0 the bottom half.
fn separable_toy(n: usize, r: &mut impl Rng) -> LabeledSet<f64> {
    let mut data = Vec::with_capacity(n * EXTENT * EXTENT);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for y in 0..EXTENT {
            let lit = (y < EXTENT / 2) == (label == 1);
            for _ in 0..EXTENT {
                data.push(if lit { 1.0 } else { -1.0 } + 0.2 * r.gen_range(-1.0..1.0));
            }
        }
        labels.push(label);
    }
    LabeledSet::new(Tensor::new(data, &[n, 1, EXTENT, EXTENT]).unwrap(), labels).unwrap()
}

#[test]
fn baseline_fits_separable_toy_images() {
    let mut r = difl::rng::stream(1, "toy");
    let train = separable_toy(40, &mut r);
    let cfg = TrainingConfig {
        lr_classification: 0.05,
        batch_size: 8,
        epochs: 30,
        min_epochs: 0,
        seed: 1,
        ..TrainingConfig::default()
    };
    let model = train_baseline(&train, &arch(), &cfg).unwrap();
    assert!(model.discriminator.is_none());
    let scores = predict_scores(&model.generator, &model.classifier, &train.images).unwrap();
    let m = TrialMetrics::evaluate(&scores, &train.labels, 0.5).unwrap();
    assert!(m.accuracy >= 0.95, "train accuracy {}", m.accuracy);
}

#[test]
fn target_labels_never_reach_training() {
    let mut r = difl::rng::stream(3, "unsupervised");
    let source = separable_toy(12, &mut r);
    let images = random_images(10, &mut r);
    let a = LabeledSet::new(images.clone(), vec![0; 10]).unwrap();
    let b = LabeledSet::new(images, (0..10).map(|i| (i % 2) as u8).collect()).unwrap();
    let cfg = TrainingConfig {
        batch_size: 4,
        epochs: 2,
        min_epochs: 0,
        seed: 3,
        ..TrainingConfig::default()
    };
    let ma = train_difl(&source, &a.without_labels(), &arch(), &cfg).unwrap();
    let mb = train_difl(&source, &b.without_labels(), &arch(), &cfg).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.generator.params.bitwise_eq(&mb.generator.params));
}

#[test]
fn generator_loss_settles_near_ln2_on_the_synthetic_task() {
    use difl::experiment::{train_one, ExperimentConfig, ModelType};
    let cfg = ExperimentConfig::default();
    let (source, target) = difl::experiment::load_pair(&cfg).unwrap();
    for seed in [0, 1] {
        let model = train_one(&cfg, &source, &target, ModelType::Difl, seed).unwrap();
        let lg = &model.history.generator;
        let w = cfg.difl.convergence_window.min(lg.len());
        let mean = lg[lg.len() - w..].iter().sum::<f64>() / w as f64;
        assert!((mean - LN_2).abs() <= 0.10, "seed {seed}: mean l_G {mean}");
        assert_eq!(lg.len(), model.iterations);
    }
}
