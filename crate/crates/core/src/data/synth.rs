//! Synthetic two-domain image task.
//!
//! Both domains share one class signal: every image holds a large bright
//! blob near the center, and class 1 images additionally carry a bright bar
//! (the "lesion") in the upper part of the frame.
//! Domain B then applies the configured appearance shift (contrast scaling,
//! intensity inversion, additive noise, extra translation jitter), which
//! changes how images look without changing what the class depends on.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Example, GrayImage, ImageSource};
use crate::error::{Error, Result};
use crate::rng;

const BACKGROUND: f64 = 0.5;
const TEXTURE_SIGMA: f64 = 0.04;
const BLOB_AMPLITUDE: f64 = 0.3;
const BAR_AMPLITUDE: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Images per class in each domain.
    pub samples_per_class: usize,
    pub extent: usize,
    pub invert: bool,
    pub noise_sigma: f64,
    /// Extra translation of domain B structures, uniform in `[-j, j]` pixels per axis.
    pub jitter_px: usize,
    /// Contrast scale about mid-gray applied to domain B; 1 leaves it unchanged.
    pub contrast: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            samples_per_class: 250,
            extent: 64,
            invert: true,
            noise_sigma: 0.15,
            jitter_px: 3,
            contrast: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same generator with every domain B shift switched off.
    pub fn null_shift(&self) -> Self {
        SynthConfig {
            invert: false,
            noise_sigma: 0.0,
            jitter_px: 0,
            contrast: 1.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 {
            return Err(Error::Config("synth: samples_per_class must be at least 1".into()));
        }
        if self.extent < 8 {
            return Err(Error::Config("synth: extent must be at least 8".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config("synth: noise_sigma must be non-negative".into()));
        }
        if !(self.contrast > 0.0) || !self.contrast.is_finite() {
            return Err(Error::Config("synth: contrast must be positive".into()));
        }
        Ok(())
    }
}

struct Shift {
    invert: bool,
    noise: Option<Normal<f64>>,
    jitter: i64,
    contrast: f64,
}

/// Generates `(A, B)`: A unshifted, B with the configured shift.
pub fn synth_two_domain(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let none = Shift {
        invert: false,
        noise: None,
        jitter: 0,
        contrast: 1.0,
    };
    let shifted = Shift {
        invert: cfg.invert,
        noise: (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma is finite")),
        jitter: cfg.jitter_px as i64,
        contrast: cfg.contrast,
    };
    Ok((
        render_domain(cfg, "synthA", &none),
        render_domain(cfg, "synthB", &shifted),
    ))
}

fn render_domain(cfg: &SynthConfig, name: &str, shift: &Shift) -> Dataset {
    let examples = (0..2 * cfg.samples_per_class)
        .map(|i| {
            let label = (i % 2) as u8;
            let mut r = rng::stream_indexed(cfg.seed, name, i as u64);
            let img = render(cfg.extent, label, shift, &mut r);
            Example {
                image: ImageSource::Memory(Arc::new(img)),
                label: Some(label),
            }
        })
        .collect();
    Dataset {
        name: name.to_string(),
        examples,
        provenance: format!("synthetic {cfg:?}"),
    }
}

fn render(extent: usize, label: u8, shift: &Shift, r: &mut rng::Rng) -> GrayImage {
    let e = extent as f64;
    let wobble = (e / 16.0).round() as i64;
    let mut offset = || -> f64 {
        let base = r.gen_range(-wobble..=wobble);
        let extra = if shift.jitter > 0 {
            r.gen_range(-shift.jitter..=shift.jitter)
        } else {
            0
        };
        (base + extra) as f64
    };
    let (dx, dy) = (offset(), offset());
    let (bx, by) = (offset(), offset());
    let (cx, cy) = (0.5 * e + dx, 0.6 * e + dy);
    let radius = e / 6.0;
    // lesion: a short horizontal bar in the upper part of the frame
    let (bar_cx, bar_cy) = (0.5 * e + bx, 0.25 * e + by);
    let bar_half_w = 0.2 * e;
    let bar_half_h = (e / 16.0).max(1.0);

    let texture = Normal::new(0.0, TEXTURE_SIGMA).expect("constant sigma");
    let mut pixels = Vec::with_capacity(extent * extent);
    for y in 0..extent {
        for x in 0..extent {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
            let mut v = BACKGROUND + BLOB_AMPLITUDE * (-d2 / (2.0 * radius * radius)).exp();
            if label == 1 && (fy - bar_cy).abs() <= bar_half_h && (fx - bar_cx).abs() <= bar_half_w {
                v += BAR_AMPLITUDE;
            }
            v += texture.sample(r);
            v = 0.5 + shift.contrast * (v - 0.5);
            if shift.invert {
                v = 1.0 - v;
            }
            if let Some(noise) = &shift.noise {
                v += noise.sample(r);
            }
            pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    GrayImage::new(extent, extent, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cfg: SynthConfig) -> SynthConfig {
        SynthConfig {
            samples_per_class: 20,
            extent: 32,
            ..cfg
        }
    }

    fn mean_pixel(ds: &Dataset) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for i in 0..ds.len() {
            let img = ds.image(i).unwrap();
            sum += img.pixels.iter().map(|&p| p as f64 / 255.0).sum::<f64>();
            n += img.pixels.len() as f64;
        }
        sum / n
    }

    #[test]
    fn class_counts_match_config() {
        let (a, b) = synth_two_domain(&small(SynthConfig::default())).unwrap();
        for ds in [&a, &b] {
            assert_eq!(ds.len(), 40);
            assert_eq!(ds.positives(), 20);
            assert_eq!(ds.negatives(), 20);
        }
    }

    #[test]
    fn inversion_mirrors_mean_intensity() {
        let cfg = SynthConfig {
            invert: true,
            noise_sigma: 0.0,
            jitter_px: 0,
            ..small(SynthConfig::default())
        };
        let (a, b) = synth_two_domain(&cfg).unwrap();
        let (ma, mb) = (mean_pixel(&a), mean_pixel(&b));
        assert!((mb - (1.0 - ma)).abs() < 0.01, "{ma} {mb}");
    }

    #[test]
    fn null_shift_domains_share_distribution() {
        let cfg = small(SynthConfig::default()).null_shift();
        let (a, b) = synth_two_domain(&cfg).unwrap();
        // same generator, independent draws
        assert!((mean_pixel(&a) - mean_pixel(&b)).abs() < 0.005);
        assert_ne!(a.image(0).unwrap(), b.image(0).unwrap());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = small(SynthConfig::default());
        let (a1, b1) = synth_two_domain(&cfg).unwrap();
        let (a2, b2) = synth_two_domain(&cfg).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig {
            noise_sigma: -1.0,
            ..SynthConfig::default()
        };
        assert!(synth_two_domain(&cfg).is_err());
    }
}
