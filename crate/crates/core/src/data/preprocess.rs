use super::dataset::GrayImage;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Bilinear resample with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &[f64], in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let axis = |out: usize, len_in: usize, len_out: usize| {
        let pos = ((out as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5).max(0.0);
        let lo = (pos.floor() as usize).min(len_in - 1);
        let hi = (lo + 1).min(len_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, in_h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(x, in_w, out_w);
            let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
            let top = lerp(src[y0 * in_w + x0], src[y0 * in_w + x1], fx);
            let bottom = lerp(src[y1 * in_w + x0], src[y1 * in_w + x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    out
}

/// Resize to `extent x extent`, scale to [0, 1], then standardize to zero
/// mean and unit variance (variance floored at 1e-6). Shape `[1, extent, extent]`.
pub fn preprocess<T: Scalar>(image: &GrayImage, extent: usize) -> Result<Tensor<T>> {
    if image.width == 0 || image.height == 0 || image.pixels.is_empty() {
        return Err(Error::Decode {
            path: "<memory>".into(),
            reason: "zero-area image".into(),
        });
    }
    let unit: Vec<f64> = image.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let resized = if image.width == extent && image.height == extent {
        unit
    } else {
        resize_bilinear(&unit, image.width, image.height, extent, extent)
    };
    let n = resized.len() as f64;
    // shifted by the first sample so constant rasters give an exact mean
    let pivot = resized[0];
    let mean = pivot + resized.iter().map(|v| v - pivot).sum::<f64>() / n;
    let var = resized.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.max(VARIANCE_FLOOR).sqrt();
    let data = resized.iter().map(|v| T::of((v - mean) / scale)).collect();
    Tensor::new(data, &[1, extent, extent])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_standardizes_to_zero() {
        let img = GrayImage::new(5, 7, vec![77; 35]);
        let t: Tensor<f64> = preprocess(&img, 8).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_extent_is_configured() {
        for (w, h) in [(3, 9), (64, 64), (100, 20)] {
            let img = GrayImage::new(w, h, (0..w * h).map(|i| (i % 251) as u8).collect());
            let t: Tensor<f64> = preprocess(&img, 16).unwrap();
            assert_eq!(t.shape(), &[1, 16, 16]);
        }
    }

    #[test]
    fn zero_area_rejected() {
        let img = GrayImage {
            width: 0,
            height: 0,
            pixels: vec![],
        };
        assert!(matches!(preprocess::<f64>(&img, 4), Err(Error::Decode { .. })));
    }

    /// Independent oracle: sample the bilinear interpolant at the half-pixel
    /// position of each output pixel, reading the source through a clamped accessor.
    fn oracle(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
        let px = |x: i64, y: i64| {
            let cx = x.clamp(0, w as i64 - 1) as usize;
            let cy = y.clamp(0, h as i64 - 1) as usize;
            src[cy * w + cx]
        };
        let mut out = vec![0.0; ow * oh];
        for oy in 0..oh {
            for ox in 0..ow {
                let sx = ((ox as f64 + 0.5) * (w as f64 / ow as f64) - 0.5).max(0.0);
                let sy = ((oy as f64 + 0.5) * (h as f64 / oh as f64) - 0.5).max(0.0);
                let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
                let (ax, ay) = (sx - x0 as f64, sy - y0 as f64);
                let mut acc = 0.0;
                for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
                    for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
                        acc += wx * wy * px(x0 + dx, y0 + dy);
                    }
                }
                out[oy * ow + ox] = acc;
            }
        }
        out
    }

    #[test]
    fn checkerboard_downsample_matches_oracle() {
        let n = 128;
        let src: Vec<f64> = (0..n * n)
            .map(|i| if ((i / n) / 3 + (i % n) / 3) % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let got = resize_bilinear(&src, n, n, 64, 64);
        let want = oracle(&src, n, n, 64, 64);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
        let got = resize_bilinear(&src, n, n, 50, 37);
        let want = oracle(&src, n, n, 50, 37);
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    proptest! {
        #[test]
        fn standardized_moments(pixels in proptest::collection::vec(any::<u8>(), 64), extent in 4usize..12) {
            let img = GrayImage::new(8, 8, pixels);
            let t: Tensor<f64> = preprocess(&img, extent).unwrap();
            let d = t.data();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let constant = d.iter().all(|&v| v == d[0]);
            // the floor only bites for (near-)constant rasters
            let unit = img.pixels.iter().map(|&p| p as f64 / 255.0).collect::<Vec<_>>();
            let raw = resize_bilinear(&unit, 8, 8, extent, extent);
            let rm = raw.iter().sum::<f64>() / n;
            let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n;
            if !constant && rv >= VARIANCE_FLOOR {
                prop_assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }
}
