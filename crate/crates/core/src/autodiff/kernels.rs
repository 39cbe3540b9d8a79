//! Forward and backward kernels on raw row-major buffers.
//!
//! Accumulation order is fixed (row-major, innermost index last) so results
//! are bit-identical across runs.

use crate::scalar::Scalar;

/// `out[r, c] = sum_k x[r, k] * w[k, c] + b[c]`
pub fn dense<T: Scalar>(x: &[T], w: &[T], b: &[T], rows: usize, inner: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend_from_slice(b);
        let acc = &mut out[r * cols..(r + 1) * cols];
        let xr = &x[r * inner..(r + 1) * inner];
        for (k, &xv) in xr.iter().enumerate() {
            let wk = &w[k * cols..(k + 1) * cols];
            for (a, &wv) in acc.iter_mut().zip(wk) {
                *a += xv * wv;
            }
        }
    }
    out
}

pub struct DenseGrads<T> {
    pub x: Option<Vec<T>>,
    pub w: Option<Vec<T>>,
    pub b: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    rows: usize,
    inner: usize,
    cols: usize,
    need: [bool; 3],
) -> DenseGrads<T> {
    let dx = need[0].then(|| {
        let mut dx = vec![T::zero(); rows * inner];
        for r in 0..rows {
            let dr = &dout[r * cols..(r + 1) * cols];
            for k in 0..inner {
                let wk = &w[k * cols..(k + 1) * cols];
                dx[r * inner + k] = dr.iter().zip(wk).fold(T::zero(), |s, (&d, &wv)| s + d * wv);
            }
        }
        dx
    });
    let dw = need[1].then(|| {
        let mut dw = vec![T::zero(); inner * cols];
        for r in 0..rows {
            let dr = &dout[r * cols..(r + 1) * cols];
            for k in 0..inner {
                let xv = x[r * inner + k];
                for (g, &d) in dw[k * cols..(k + 1) * cols].iter_mut().zip(dr) {
                    *g += xv * d;
                }
            }
        }
        dw
    });
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); cols];
        for r in 0..rows {
            for (g, &d) in db.iter_mut().zip(&dout[r * cols..(r + 1) * cols]) {
                *g += d;
            }
        }
        db
    });
    DenseGrads { x: dx, w: dw, b: db }
}

/// Geometry of a valid (unpadded) strided cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.height - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.kernel_w) / self.stride + 1
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_h(), self.out_w()]
    }
}

pub fn conv2d<T: Scalar>(x: &[T], k: &[T], g: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane_in = g.height * g.width;
    let plane_out = oh * ow;
    let ksize = g.kernel_h * g.kernel_w;
    let mut out = vec![T::zero(); g.batch * g.out_channels * plane_out];
    for b in 0..g.batch {
        for o in 0..g.out_channels {
            let dst = &mut out[(b * g.out_channels + o) * plane_out..][..plane_out];
            for c in 0..g.in_channels {
                let src = &x[(b * g.in_channels + c) * plane_in..][..plane_in];
                let kern = &k[(o * g.in_channels + c) * ksize..][..ksize];
                for ki in 0..g.kernel_h {
                    for kj in 0..g.kernel_w {
                        let wv = kern[ki * g.kernel_w + kj];
                        for i in 0..oh {
                            let row = &src[(i * g.stride + ki) * g.width + kj..];
                            let acc = &mut dst[i * ow..(i + 1) * ow];
                            if g.stride == 1 {
                                for (a, &xv) in acc.iter_mut().zip(&row[..ow]) {
                                    *a += wv * xv;
                                }
                            } else {
                                for (j, a) in acc.iter_mut().enumerate() {
                                    *a += wv * row[j * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(dx, dk)`, each only when requested.
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    k: &[T],
    dout: &[T],
    g: &ConvGeometry,
    need: [bool; 2],
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane_in = g.height * g.width;
    let plane_out = oh * ow;
    let ksize = g.kernel_h * g.kernel_w;
    let mut dx = need[0].then(|| vec![T::zero(); x.len()]);
    let mut dk = need[1].then(|| vec![T::zero(); k.len()]);
    for b in 0..g.batch {
        for o in 0..g.out_channels {
            let grad = &dout[(b * g.out_channels + o) * plane_out..][..plane_out];
            for c in 0..g.in_channels {
                let in_off = (b * g.in_channels + c) * plane_in;
                let k_off = (o * g.in_channels + c) * ksize;
                for ki in 0..g.kernel_h {
                    for kj in 0..g.kernel_w {
                        let kidx = k_off + ki * g.kernel_w + kj;
                        if let Some(dx) = dx.as_mut() {
                            let wv = k[kidx];
                            for i in 0..oh {
                                let base = in_off + (i * g.stride + ki) * g.width + kj;
                                let gr = &grad[i * ow..(i + 1) * ow];
                                if g.stride == 1 {
                                    for (d, &gv) in dx[base..base + ow].iter_mut().zip(gr) {
                                        *d += wv * gv;
                                    }
                                } else {
                                    for (j, &gv) in gr.iter().enumerate() {
                                        dx[base + j * g.stride] += wv * gv;
                                    }
                                }
                            }
                        }
                        if let Some(dk) = dk.as_mut() {
                            let mut acc = T::zero();
                            for i in 0..oh {
                                let base = in_off + (i * g.stride + ki) * g.width + kj;
                                let gr = &grad[i * ow..(i + 1) * ow];
                                if g.stride == 1 {
                                    acc += x[base..base + ow]
                                        .iter()
                                        .zip(gr)
                                        .fold(T::zero(), |s, (&xv, &gv)| s + xv * gv);
                                } else {
                                    for (j, &gv) in gr.iter().enumerate() {
                                        acc += x[base + j * g.stride] * gv;
                                    }
                                }
                            }
                            dk[kidx] += acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dk)
}

/// 2x2 max pooling with stride 2 over `[planes, h, w]`; trailing odd rows and
/// columns are dropped. Returns the pooled values and the flat input index
/// of each maximum (first maximum wins ties).
pub fn max_pool2<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let off = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = off + 2 * i * w + 2 * j;
                for cand in [
                    off + 2 * i * w + 2 * j + 1,
                    off + (2 * i + 1) * w + 2 * j,
                    off + (2 * i + 1) * w + 2 * j + 1,
                ] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
