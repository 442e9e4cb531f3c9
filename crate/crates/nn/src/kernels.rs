//! Dense 1-D convolution kernels over `[batch, channels, length]` buffers.
//!
//! The innermost loop always runs along time so stride-1 layers reduce to
//! contiguous multiply-adds. Everything is single-threaded and the summation
//! order is fixed, so results are bit-reproducible.

use avocodo_core::Real;
use serde::{Deserialize, Serialize};

/// Stride, zero padding, dilation and channel grouping of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvGeom {
    fn default() -> Self {
        Self { stride: 1, padding: 0, dilation: 1, groups: 1 }
    }
}

impl ConvGeom {
    /// Stride 1 with "same" padding for an odd kernel at `dilation`.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self { stride: 1, padding: dilation * (kernel - 1) / 2, dilation, groups: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = len + 2 * self.padding;
        (padded >= span && self.stride > 0).then(|| (padded - span) / self.stride + 1)
    }
}

/// Output positions `t` for which `t·stride + offset` lands inside `0..len`.
#[inline]
fn valid_range(offset: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if offset >= 0 { 0 } else { ((-offset) as usize).div_ceil(stride) };
    let last = len as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { (last as usize / stride + 1).min(out_len) };
    (lo, hi.max(lo))
}

#[inline]
pub(crate) fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight interleaved partial sums.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (pa, pb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += pa[i] * pb[i];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Shapes of one convolution call.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub in_len: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub out_len: usize,
}

/// `y[b,o,t] = bias[o] + Σ_{c,k} w[o,c,k] · x[b, g·C + c, t·s + k·d − p]`,
/// with `w` laid out `[out, in/groups, kernel]`.
pub fn conv1d_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, dims: &ConvDims, geom: &ConvGeom) -> Vec<T> {
    let ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len } = *dims;
    let cin_g = in_channels / geom.groups;
    let cout_g = out_channels / geom.groups;
    let mut y = vec![T::zero(); batch * out_channels * out_len];
    for b in 0..batch {
        for o in 0..out_channels {
            let grp = o / cout_g;
            let y_row = &mut y[(b * out_channels + o) * out_len..][..out_len];
            if let Some(bias) = bias {
                y_row.iter_mut().for_each(|v| *v = bias[o]);
            }
            for ci in 0..cin_g {
                let c = grp * cin_g + ci;
                let x_row = &x[(b * in_channels + c) * in_len..][..in_len];
                let w_row = &w[(o * cin_g + ci) * kernel..][..kernel];
                for (k, &wv) in w_row.iter().enumerate() {
                    let offset = (k * geom.dilation) as isize - geom.padding as isize;
                    let (lo, hi) = valid_range(offset, geom.stride, in_len, out_len);
                    if lo >= hi {
                        continue;
                    }
                    if geom.stride == 1 {
                        let start = (lo as isize + offset) as usize;
                        axpy(wv, &x_row[start..start + hi - lo], &mut y_row[lo..hi]);
                    } else {
                        for t in lo..hi {
                            y_row[t] += wv * x_row[(t as isize * geom.stride as isize + offset) as usize];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates the input, weight and bias gradients of [`conv1d_forward`].
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad_y: &[T],
    dims: &ConvDims,
    geom: &ConvGeom,
    mut grad_x: Option<&mut [T]>,
    mut grad_w: Option<&mut [T]>,
    mut grad_b: Option<&mut [T]>,
) {
    let ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len } = *dims;
    let cin_g = in_channels / geom.groups;
    let cout_g = out_channels / geom.groups;
    let mut strided = Vec::new();
    for b in 0..batch {
        for o in 0..out_channels {
            let grp = o / cout_g;
            let gy_row = &grad_y[(b * out_channels + o) * out_len..][..out_len];
            if let Some(gb) = grad_b.as_deref_mut() {
                gb[o] += gy_row.iter().copied().sum::<T>();
            }
            for ci in 0..cin_g {
                let c = grp * cin_g + ci;
                let x_off = (b * in_channels + c) * in_len;
                let w_off = (o * cin_g + ci) * kernel;
                for k in 0..kernel {
                    let offset = (k * geom.dilation) as isize - geom.padding as isize;
                    let (lo, hi) = valid_range(offset, geom.stride, in_len, out_len);
                    if lo >= hi {
                        continue;
                    }
                    let first = (lo as isize * geom.stride as isize + offset) as usize;
                    if geom.stride == 1 {
                        let n = hi - lo;
                        if let Some(gw) = grad_w.as_deref_mut() {
                            gw[w_off + k] += dot(&gy_row[lo..hi], &x[x_off + first..x_off + first + n]);
                        }
                        if let Some(gx) = grad_x.as_deref_mut() {
                            axpy(w[w_off + k], &gy_row[lo..hi], &mut gx[x_off + first..x_off + first + n]);
                        }
                    } else {
                        if let Some(gw) = grad_w.as_deref_mut() {
                            strided.clear();
                            strided.extend((0..hi - lo).map(|i| x[x_off + first + i * geom.stride]));
                            gw[w_off + k] += dot(&gy_row[lo..hi], &strided);
                        }
                        if let Some(gx) = grad_x.as_deref_mut() {
                            let wv = w[w_off + k];
                            for (i, &g) in gy_row[lo..hi].iter().enumerate() {
                                gx[x_off + first + i * geom.stride] += wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution, `w` laid out `[in, out, kernel]`:
/// `y[b,o,i·s + k − p] += w[c,o,k] · x[b,c,i]`, output length
/// `(L − 1)·s − 2p + K`.
pub fn conv_transpose1d_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    dims: &ConvDims,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len } = *dims;
    let mut y = vec![T::zero(); batch * out_channels * out_len];
    for b in 0..batch {
        for o in 0..out_channels {
            let y_row = &mut y[(b * out_channels + o) * out_len..][..out_len];
            if let Some(bias) = bias {
                y_row.iter_mut().for_each(|v| *v = bias[o]);
            }
            for c in 0..in_channels {
                let x_row = &x[(b * in_channels + c) * in_len..][..in_len];
                let w_row = &w[(c * out_channels + o) * kernel..][..kernel];
                for (k, &wv) in w_row.iter().enumerate() {
                    let offset = k as isize - padding as isize;
                    // input positions i with 0 ≤ i·s + offset < out_len
                    let (lo, hi) = valid_range(offset, stride, out_len, in_len);
                    for i in lo..hi {
                        y_row[(i as isize * stride as isize + offset) as usize] += wv * x_row[i];
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad_y: &[T],
    dims: &ConvDims,
    stride: usize,
    padding: usize,
    mut grad_x: Option<&mut [T]>,
    mut grad_w: Option<&mut [T]>,
    mut grad_b: Option<&mut [T]>,
) {
    let ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len } = *dims;
    let mut gathered = Vec::new();
    for b in 0..batch {
        for o in 0..out_channels {
            let gy_row = &grad_y[(b * out_channels + o) * out_len..][..out_len];
            if let Some(gb) = grad_b.as_deref_mut() {
                gb[o] += gy_row.iter().copied().sum::<T>();
            }
            for c in 0..in_channels {
                let x_off = (b * in_channels + c) * in_len;
                let w_off = (c * out_channels + o) * kernel;
                for k in 0..kernel {
                    let offset = k as isize - padding as isize;
                    let (lo, hi) = valid_range(offset, stride, out_len, in_len);
                    if lo >= hi {
                        continue;
                    }
                    gathered.clear();
                    gathered.extend((lo..hi).map(|i| gy_row[(i as isize * stride as isize + offset) as usize]));
                    if let Some(gw) = grad_w.as_deref_mut() {
                        gw[w_off + k] += dot(&gathered, &x[x_off + lo..x_off + hi]);
                    }
                    if let Some(gx) = grad_x.as_deref_mut() {
                        axpy(w[w_off + k], &gathered, &mut gx[x_off + lo..x_off + hi]);
                    }
                }
            }
        }
    }
}
