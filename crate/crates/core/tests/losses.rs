use std::f64::consts::LN_2;

use difl::autodiff::Tensor;
use difl::data::DomainLabel;
use difl::training::{classification_loss, discriminator_loss, generator_domain_loss, loss_value};
use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-7;

/// Plain scalar loop: `-(1/N) Σ t ln p + (1 - t) ln(1 - p)` with `p` clipped.
fn cross_entropy(p: &[f64], t: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&p, &t) in p.iter().zip(t) {
        let p = p.clamp(EPS, 1.0 - EPS);
        sum += t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    -sum / p.len() as f64
}

fn tensor(p: &[f64]) -> Tensor<f64> {
    Tensor::from_slice(p, &[p.len()]).unwrap()
}

fn l_c(p: &[f64], labels: &[u8]) -> f64 {
    loss_value(&tensor(p), |g, x| classification_loss(g, x, labels, EPS)).unwrap()
}

fn l_d(p: &[f64], domains: &[DomainLabel]) -> f64 {
    loss_value(&tensor(p), |g, x| discriminator_loss(g, x, domains, EPS)).unwrap()
}

fn l_g(p: &[f64]) -> f64 {
    loss_value(&tensor(p), |g, x| generator_domain_loss(g, x, EPS)).unwrap()
}

fn random_probability(r: &mut impl Rng) -> f64 {
    match r.gen_range(0..10) {
        0 => r.gen_range(0.0..1e-6),
        1 => 1.0 - r.gen_range(0.0..1e-6),
        _ => r.gen_range(0.0..1.0),
    }
}

#[test]
fn thousand_random_instances_match_scalar_loops() {
    let mut r = difl::rng::stream(11, "loss-oracle");
    for _ in 0..1000 {
        let n = r.gen_range(1..40);
        let p: Vec<f64> = (0..n).map(|_| random_probability(&mut r)).collect();
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
        assert!((l_c(&p, &labels) - cross_entropy(&p, &t)).abs() <= 1e-12);
        assert!((l_d(&p, &domains) - cross_entropy(&p, &t)).abs() <= 1e-12);
        assert!((l_g(&p) - cross_entropy(&p, &vec![0.5; n])).abs() <= 1e-12);
    }
}

#[test]
fn generator_loss_minimum_is_ln2_at_half() {
    for n in [1, 2, 7, 64] {
        assert!((l_g(&vec![0.5; n]) - LN_2).abs() < 1e-15);
    }
}

#[test]
fn single_score_off_by_more_than_a_thousandth_clears_the_margin() {
    for d in [1.0001e-3, 2e-3, 0.1, 0.4999] {
        assert!(l_g(&[0.5 + d]) > LN_2 + 1e-6, "+{d}");
        assert!(l_g(&[0.5 - d]) > LN_2 + 1e-6, "-{d}");
    }
}

#[test]
fn one_slightly_off_score_in_a_larger_batch_stays_within_the_margin() {
    // Excess over ln 2 is about 2δ²/N, below 1e-6 once N ≥ 3 at δ just over 1e-3.
    let mut p = vec![0.5; 4];
    p[0] = 0.5 + 1.01e-3;
    let excess = l_g(&p) - LN_2;
    assert!(excess > 0.0);
    assert!(excess < 1e-6);
}

#[test]
fn clipped_losses_stay_finite_at_the_extremes() {
    let p = [0.0, 1.0, 0.0, 1.0];
    let worst = -(EPS.ln());
    assert!((l_c(&p, &[1, 0, 0, 1]) - worst / 2.0).abs() < 1e-6);
    assert!(l_g(&p).is_finite());
}

proptest! {
    #[test]
    fn generator_excess_bounded_below_by_squared_deviation(
        p in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..50)
    ) {
        let bound: f64 = p.iter().map(|v| 2.0 * (v - 0.5).powi(2)).sum::<f64>() / p.len() as f64;
        prop_assert!(l_g(&p) - LN_2 >= bound - 1e-12);
    }

    #[test]
    fn losses_are_non_negative(
        p in prop::collection::vec(0.0f64..=1.0, 1..50),
        flip in any::<bool>(),
    ) {
        let labels: Vec<u8> = (0..p.len()).map(|i| ((i % 2 == 0) ^ flip) as u8).collect();
        prop_assert!(l_c(&p, &labels) >= 0.0);
        prop_assert!(l_g(&p) >= LN_2 - 1e-15);
    }

    #[test]
    fn discriminator_loss_swaps_with_domains(p in prop::collection::vec(0.01f64..0.99, 1..30)) {
        let src = vec![DomainLabel::Source; p.len()];
        let tgt = vec![DomainLabel::Target; p.len()];
        let q: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        prop_assert!((l_d(&p, &src) - l_d(&q, &tgt)).abs() < 1e-12);
    }
}
