//! Forward and backward kernels on raw buffers. The graph in `graph.rs`
//! owns shapes and bookkeeping; everything here is plain arithmetic.

use crate::tensor::Element;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.n * self.h_out * self.w_out
    }
}

/// Output columns `lo..hi` whose input column `ox·stride + kj - pad` lies
/// inside the image.
fn valid_cols(kj: usize, g: &ConvGeom) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride);
    let hi = ((g.w + g.pad).saturating_sub(kj)).div_ceil(g.stride).min(g.w_out);
    (lo.min(hi), hi)
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.k == 1 && g.stride == 1 && g.pad == 0
}

/// Unfolds `x` (N×C×H×W) into a `(C·k·k) × (N·H'·W')` matrix.
pub(crate) fn im2col<T: Element>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let hw = g.h * g.w;
    let mut cols = Vec::with_capacity(g.patch() * g.cols());
    if is_pointwise(g) {
        for c in 0..g.c_in {
            for n in 0..g.n {
                cols.extend_from_slice(&x[(n * g.c_in + c) * hw..][..hw]);
            }
        }
        return cols;
    }
    let zero = T::zero();
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let (lo, hi) = valid_cols(kj, g);
                for n in 0..g.n {
                    let src = &x[(n * g.c_in + c) * hw..][..hw];
                    for oy in 0..g.h_out {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            cols.extend(std::iter::repeat_n(zero, g.w_out));
                            continue;
                        }
                        let row = &src[iy as usize * g.w..][..g.w];
                        cols.extend(std::iter::repeat_n(zero, lo));
                        if g.stride == 1 {
                            cols.extend_from_slice(&row[lo + kj - g.pad..hi + kj - g.pad]);
                        } else {
                            cols.extend((lo..hi).map(|ox| row[ox * g.stride + kj - g.pad]));
                        }
                        cols.extend(std::iter::repeat_n(zero, g.w_out - hi));
                    }
                }
            }
        }
    }
    cols
}

/// Folds a column matrix back into image layout, accumulating overlaps.
pub(crate) fn col2im<T: Element>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let hw = g.h * g.w;
    let plane = g.h_out * g.w_out;
    let ncols = g.cols();
    if is_pointwise(g) {
        for c in 0..g.c_in {
            for n in 0..g.n {
                let src = &cols[c * ncols + n * hw..][..hw];
                for (d, &v) in dx[(n * g.c_in + c) * hw..][..hw].iter_mut().zip(src) {
                    *d = *d + v;
                }
            }
        }
        return;
    }
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let (lo, hi) = valid_cols(kj, g);
                let src_row = &cols[((c * g.k + ki) * g.k + kj) * ncols..][..ncols];
                for n in 0..g.n {
                    let base = (n * g.c_in + c) * hw;
                    for oy in 0..g.h_out {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &src_row[n * plane + oy * g.w_out..][..g.w_out];
                        let dst = &mut dx[base + iy as usize * g.w..][..g.w];
                        #[allow(clippy::needless_range_loop)]
                        for ox in lo..hi {
                            let ix = ox * g.stride + kj - g.pad;
                            dst[ix] = dst[ix] + src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Returns the output and the unfolded input, which backward reuses.
pub(crate) fn conv2d_forward<T: Element>(x: &[T], weight: &[T], bias: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, g);
    let ncols = g.cols();
    let mut out_mat = vec![T::zero(); g.c_out * ncols];
    T::gemm(g.c_out, g.patch(), ncols, weight, false, &cols, false, &mut out_mat, false);
    let plane = g.h_out * g.w_out;
    let mut out = Vec::with_capacity(g.n * g.c_out * plane);
    for n in 0..g.n {
        for o in 0..g.c_out {
            let b = bias[o];
            out.extend(out_mat[o * ncols + n * plane..][..plane].iter().map(|&s| s + b));
        }
    }
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Element>(
    cols: &[T],
    weight: &[T],
    dy: &[T],
    g: &ConvGeom,
    need: [bool; 3],
) -> ConvGrads<T> {
    let plane = g.h_out * g.w_out;
    let ncols = g.cols();
    let mut dy_mat = Vec::with_capacity(g.c_out * ncols);
    for o in 0..g.c_out {
        for n in 0..g.n {
            dy_mat.extend_from_slice(&dy[(n * g.c_out + o) * plane..][..plane]);
        }
    }
    let db = need[2].then(|| {
        (0..g.c_out)
            .map(|o| dy_mat[o * ncols..(o + 1) * ncols].iter().copied().sum())
            .collect()
    });
    let dw = need[1].then(|| {
        let mut dw = vec![T::zero(); g.c_out * g.patch()];
        T::gemm(g.c_out, ncols, g.patch(), &dy_mat, false, cols, true, &mut dw, false);
        dw
    });
    let dx = need[0].then(|| {
        let mut dcols = vec![T::zero(); g.patch() * ncols];
        T::gemm(g.patch(), g.c_out, ncols, weight, true, &dy_mat, false, &mut dcols, false);
        let mut dx = vec![T::zero(); g.n * g.c_in * g.h * g.w];
        col2im(&dcols, g, &mut dx);
        dx
    });
    ConvGrads { dx, dw, db }
}

/// Max pooling; returns outputs and the flat input index chosen for each.
/// Ties resolve to the first element in row-major window order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool_forward<T: Element>(
    x: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    h_out: usize,
    w_out: usize,
) -> (Vec<T>, Vec<u32>) {
    let mut out = Vec::with_capacity(n * c * h_out * w_out);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best = base + oy * stride * w + ox * stride;
                let mut best_v = x[best];
                for ki in 0..k {
                    for kj in 0..k {
                        let idx = base + (oy * stride + ki) * w + ox * stride + kj;
                        if x[idx] > best_v {
                            best_v = x[idx];
                            best = idx;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

/// Per-channel batch statistics over N and the spatial extent.
pub(crate) struct BnBatch<T> {
    pub out: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub(crate) fn batchnorm_train<T: Element>(
    x: &[T],
    n: usize,
    c: usize,
    spatial: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> BnBatch<T> {
    let m = T::from_f64((n * spatial) as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for b in 0..n {
            let off = (b * c + ch) * spatial;
            s = s + x[off..off + spatial].iter().copied().sum::<T>();
        }
        let mu = s / m;
        let mut v = T::zero();
        for b in 0..n {
            let off = (b * c + ch) * spatial;
            for &xv in &x[off..off + spatial] {
                let d = xv - mu;
                v = v + d * d;
            }
        }
        mean[ch] = mu;
        var[ch] = v / m;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    BnBatch {
        out,
        xhat,
        inv_std,
        mean,
        var,
    }
}

/// Returns (dx, dgamma, dbeta) for training-mode batch norm.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_train_backward<T: Element>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    n: usize,
    c: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::from_f64((n * spatial) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                dgamma[ch] = dgamma[ch] + dy[i] * xhat[i];
                dbeta[ch] = dbeta[ch] + dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..n {
        for ch in 0..c {
            let scale = gamma[ch] * inv_std[ch] / m;
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                dx[i] = scale * (m * dy[i] - dbeta[ch] - xhat[i] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Row-wise `softmax(z / t)` with max subtraction.
pub(crate) fn softmax_rows<T: Element>(z: &[T], rows: usize, cols: usize, t: T) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut s = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = ((v - mx) / t).exp();
            s = s + *d;
        }
        for d in dst.iter_mut() {
            *d = *d / s;
        }
    }
    out
}

/// Row-wise `log softmax(z / t)`.
pub(crate) fn log_softmax_rows<T: Element>(z: &[T], rows: usize, cols: usize, t: T) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = row.iter().map(|&v| ((v - mx) / t).exp()).sum::<T>().ln();
        for (d, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *d = (v - mx) / t - lse;
        }
    }
    out
}
