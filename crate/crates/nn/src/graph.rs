//! Reverse-mode automatic differentiation on a linear tape.
//!
//! A [`Graph`] records every operation in execution order; [`Graph::backward`]
//! walks the tape once from the end. Nodes that do not depend on a trainable
//! leaf are never differentiated, which is how discriminator parameters are
//! frozen during the generator update and vice versa.

use std::sync::Arc;

use avocodo_core::features::{MelExtractor, MelTrace};
use avocodo_core::Real;

use crate::error::{shape_err, Result};
use crate::kernels::{self, ConvDims, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Real> {
    Leaf,
    WeightNorm { v: Var, g: Var },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose { x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize },
    LeakyRelu { x: Var, slope: T },
    Tanh { x: Var },
    Combine { xs: Vec<Var>, scale: T },
    Transpose { x: Var },
    Narrow { x: Var, start: usize },
    LogMel { x: Var, extractor: Arc<MelExtractor<T>>, traces: Vec<MelTrace<T>> },
    Mean { x: Var },
    MseTo { x: Var, target: T },
    MeanAbsDiff { a: Var, b: Var },
    WeightedSum { terms: Vec<(Var, T)> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Parameter store bound into a graph: one leaf per parameter.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Adds every parameter of `store` as a leaf.
    pub fn bind(&mut self, store: &ParamStore<T>, trainable: bool) -> Bound {
        let vars = store.iter().map(|(_, p)| self.leaf(p.value.clone(), trainable)).collect();
        Bound { vars }
    }

    /// `w = g · v / ‖v‖`, the norm taken over each slice along the first axis.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var> {
        let vs = self.shape(v);
        if self.shape(g) != [vs[0], 1, 1] {
            return shape_err(format!("weight-norm gain {:?} for direction {vs:?}", self.shape(g)));
        }
        let inner = vs[1] * vs[2];
        let (vd, gd) = (self.value(v).data(), self.value(g).data());
        let mut w = vec![T::zero(); vd.len()];
        for i in 0..vs[0] {
            let slice = &vd[i * inner..(i + 1) * inner];
            let norm = slice.iter().map(|&a| a * a).sum::<T>().sqrt();
            if norm > T::zero() {
                let s = gd[i] / norm;
                for (o, &a) in w[i * inner..(i + 1) * inner].iter_mut().zip(slice) {
                    *o = s * a;
                }
            }
        }
        let needs = self.needs(v) || self.needs(g);
        Ok(self.push(Tensor::new(vs, w)?, Op::WeightNorm { v, g }, needs))
    }

    fn conv_dims(&self, x: Var, w: Var, geom: &ConvGeom) -> Result<ConvDims> {
        let [batch, in_channels, in_len] = self.shape(x);
        let [out_channels, cin_g, kernel] = self.shape(w);
        if geom.groups == 0 || in_channels % geom.groups != 0 || out_channels % geom.groups != 0 {
            return shape_err(format!("{in_channels}→{out_channels} channels not divisible into {} groups", geom.groups));
        }
        if cin_g != in_channels / geom.groups {
            return shape_err(format!("weight expects {cin_g} input channels per group, input has {in_channels}"));
        }
        let Some(out_len) = geom.out_len(in_len, kernel) else {
            return shape_err(format!("input of length {in_len} is shorter than the kernel span"));
        };
        Ok(ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len })
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let dims = self.conv_dims(x, w, &geom)?;
        if let Some(b) = b {
            if self.value(b).numel() != dims.out_channels {
                return shape_err("bias length differs from output channels");
            }
        }
        let y = kernels::conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &dims,
            &geom,
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let shape = [dims.batch, dims.out_channels, dims.out_len];
        Ok(self.push(Tensor::new(shape, y)?, Op::Conv { x, w, b, geom }, needs))
    }

    fn convt_dims(&self, x: Var, w: Var, stride: usize, padding: usize) -> Result<ConvDims> {
        let [batch, in_channels, in_len] = self.shape(x);
        let [w_in, out_channels, kernel] = self.shape(w);
        if w_in != in_channels {
            return shape_err(format!("transposed weight expects {w_in} input channels, input has {in_channels}"));
        }
        let full = (in_len.max(1) - 1) * stride + kernel;
        if in_len == 0 || full <= 2 * padding {
            return shape_err("transposed convolution output would be empty");
        }
        Ok(ConvDims { batch, in_channels, in_len, out_channels, kernel, out_len: full - 2 * padding })
    }

    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let dims = self.convt_dims(x, w, stride, padding)?;
        let y = kernels::conv_transpose1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &dims,
            stride,
            padding,
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let shape = [dims.batch, dims.out_channels, dims.out_len];
        Ok(self.push(Tensor::new(shape, y)?, Op::ConvTranspose { x, w, b, stride, padding }, needs))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::lit(slope);
        let t = self.value(x);
        let data = t.data().iter().map(|&v| if v > T::zero() { v } else { v * slope }).collect();
        let out = Tensor::new(t.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape(), t.data().iter().map(|v| v.tanh()).collect()).expect("same shape");
        let needs = self.needs(x);
        self.push(out, Op::Tanh { x }, needs)
    }

    /// `scale · Σ xs` over equally shaped inputs.
    pub fn combine(&mut self, xs: &[Var], scale: f64) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return shape_err("nothing to combine");
        };
        let shape = self.shape(first);
        if xs.iter().any(|&x| self.shape(x) != shape) {
            return shape_err("combined tensors differ in shape");
        }
        let scale = T::lit(scale);
        let mut acc = self.value(first).data().to_vec();
        for &x in &xs[1..] {
            for (a, &b) in acc.iter_mut().zip(self.value(x).data()) {
                *a += b;
            }
        }
        if scale != T::one() {
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        let needs = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(Tensor::new(shape, acc)?, Op::Combine { xs: xs.to_vec(), scale }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.combine(&[a, b], 1.0)
    }

    pub fn mean_of(&mut self, xs: &[Var]) -> Result<Var> {
        self.combine(xs, 1.0 / xs.len().max(1) as f64)
    }

    /// Swaps the channel and time axes.
    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [b, c, l] = t.shape();
        let src = t.data();
        let mut out = vec![T::zero(); src.len()];
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    out[(bi * l + li) * c + ci] = src[(bi * c + ci) * l + li];
                }
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new([b, l, c], out).expect("same size"), Op::Transpose { x }, needs)
    }

    /// Channels `start .. start + len`.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let [b, c, l] = t.shape();
        if len == 0 || start + len > c {
            return shape_err(format!("channel range {start}..{} of {c}", start + len));
        }
        let mut out = Vec::with_capacity(b * len * l);
        for bi in 0..b {
            out.extend_from_slice(&t.data()[(bi * c + start) * l..(bi * c + start + len) * l]);
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new([b, len, l], out)?, Op::Narrow { x, start }, needs))
    }

    /// Log-mel spectrogram of each single-channel row: `[B,1,T] → [B,M,F]`.
    pub fn log_mel(&mut self, x: Var, extractor: &Arc<MelExtractor<T>>) -> Result<Var> {
        let t = self.value(x);
        let [b, c, _] = t.shape();
        if c != 1 {
            return shape_err(format!("mel input must have one channel, got {c}"));
        }
        let mut traces = Vec::with_capacity(b);
        let mut data = Vec::new();
        let mut dims = (0, 0);
        for bi in 0..b {
            let (mel, trace) = extractor.mel_with_trace(t.row(bi, 0))?;
            dims = (mel.n_mels, mel.n_frames);
            data.extend_from_slice(&mel.values);
            traces.push(trace);
        }
        let out = Tensor::new([b, dims.0, dims.1], data)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::LogMel { x, extractor: Arc::clone(extractor), traces }, needs))
    }

    /// Mean of all elements as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().copied().sum::<T>() / T::lit(t.numel().max(1) as f64);
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Mean { x }, needs)
    }

    /// `mean((x − target)²)` as a scalar.
    pub fn mse_to(&mut self, x: Var, target: f64) -> Var {
        let target = T::lit(target);
        let t = self.value(x);
        let n = T::lit(t.numel().max(1) as f64);
        let s = t.data().iter().map(|&v| (v - target) * (v - target)).sum::<T>() / n;
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::MseTo { x, target }, needs)
    }

    /// `mean(|a − b|)` as a scalar.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let n = T::lit(ta.numel().max(1) as f64);
        let s = ta.data().iter().zip(tb.data()).map(|(&p, &q)| (p - q).abs()).sum::<T>() / n;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(s), Op::MeanAbsDiff { a, b }, needs))
    }

    /// `Σ wᵢ · sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut s = T::zero();
        let mut conv = Vec::with_capacity(terms.len());
        for &(v, w) in terms {
            if self.value(v).numel() != 1 {
                return shape_err("weighted_sum takes scalar terms");
            }
            let w = T::lit(w);
            s += w * self.value(v).item();
            conv.push((v, w));
        }
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { terms: conv }, needs))
    }

    /// Smallest `|x|` fed to any leaky ReLU, the distance to the nearest kink.
    pub fn kink_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::LeakyRelu { x, .. } => {
                    self.value(x).data().iter().map(|v| v.abs().as_f64()).min_by(f64::total_cmp)
                }
                _ => None,
            })
            .min_by(f64::total_cmp)
    }

    /// Gradients of the scalar `loss` with respect to every node it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return shape_err("backward needs a scalar loss");
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::WeightNorm { v, g } => {
                let vs = self.shape(*v);
                let inner = vs[1] * vs[2];
                let (vd, gd) = (self.value(*v).data(), self.value(*g).data());
                let mut gv = vec![T::zero(); vd.len()];
                let mut gg = vec![T::zero(); vs[0]];
                for r in 0..vs[0] {
                    let slice = &vd[r * inner..(r + 1) * inner];
                    let grow = &gy[r * inner..(r + 1) * inner];
                    let norm = slice.iter().map(|&a| a * a).sum::<T>().sqrt();
                    if norm == T::zero() {
                        continue;
                    }
                    let proj = kernels::dot(grow, slice);
                    gg[r] = proj / norm;
                    let s = gd[r] / norm;
                    let t = gd[r] * proj / (norm * norm * norm);
                    for ((o, &gw), &a) in gv[r * inner..(r + 1) * inner].iter_mut().zip(grow).zip(slice) {
                        *o = s * gw - t * a;
                    }
                }
                self.accumulate(grads, *v, &gv);
                self.accumulate(grads, *g, &gg);
            }
            Op::Conv { x, w, b, geom } => {
                let dims = self.conv_dims(*x, *w, geom).expect("validated in forward");
                let mut gx = self.take_grad(grads, *x);
                let mut gw = self.take_grad(grads, *w);
                let mut gb = b.and_then(|b| self.take_grad(grads, b));
                kernels::conv1d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy,
                    &dims,
                    geom,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                self.restore(grads, *x, gx);
                self.restore(grads, *w, gw);
                if let Some(b) = b {
                    self.restore(grads, *b, gb);
                }
            }
            Op::ConvTranspose { x, w, b, stride, padding } => {
                let dims = self.convt_dims(*x, *w, *stride, *padding).expect("validated in forward");
                let mut gx = self.take_grad(grads, *x);
                let mut gw = self.take_grad(grads, *w);
                let mut gb = b.and_then(|b| self.take_grad(grads, b));
                kernels::conv_transpose1d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy,
                    &dims,
                    *stride,
                    *padding,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                self.restore(grads, *x, gx);
                self.restore(grads, *w, gw);
                if let Some(b) = b {
                    self.restore(grads, *b, gb);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    for ((o, &g), &v) in gx.iter_mut().zip(gy).zip(self.value(*x).data()) {
                        *o += if v > T::zero() { g } else { g * *slope };
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::Tanh { x } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    for ((o, &g), &y) in gx.iter_mut().zip(gy).zip(node.value.data()) {
                        *o += g * (T::one() - y * y);
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::Combine { xs, scale } => {
                for &x in xs {
                    if let Some(mut gx) = self.take_grad(grads, x) {
                        for (o, &g) in gx.iter_mut().zip(gy) {
                            *o += *scale * g;
                        }
                        self.restore(grads, x, Some(gx));
                    }
                }
            }
            Op::Transpose { x } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    let [b, c, l] = self.shape(*x);
                    for bi in 0..b {
                        for ci in 0..c {
                            for li in 0..l {
                                gx[(bi * c + ci) * l + li] += gy[(bi * l + li) * c + ci];
                            }
                        }
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::Narrow { x, start } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    let [b, c, l] = self.shape(*x);
                    let len = node.value.channels();
                    for bi in 0..b {
                        let dst = &mut gx[(bi * c + start) * l..(bi * c + start + len) * l];
                        for (o, &g) in dst.iter_mut().zip(&gy[bi * len * l..(bi + 1) * len * l]) {
                            *o += g;
                        }
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::LogMel { x, extractor, traces } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    let per_item = node.value.channels() * node.value.len();
                    let l = self.shape(*x)[2];
                    for (bi, trace) in traces.iter().enumerate() {
                        let g = extractor.backward(trace, &gy[bi * per_item..(bi + 1) * per_item]);
                        for (o, v) in gx[bi * l..(bi + 1) * l].iter_mut().zip(g) {
                            *o += v;
                        }
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::Mean { x } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    let s = gy[0] / T::lit(gx.len().max(1) as f64);
                    gx.iter_mut().for_each(|o| *o += s);
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::MseTo { x, target } => {
                if let Some(mut gx) = self.take_grad(grads, *x) {
                    let xv = self.value(*x).data();
                    let s = T::lit(2.0) * gy[0] / T::lit(xv.len().max(1) as f64);
                    for (o, &v) in gx.iter_mut().zip(xv) {
                        *o += s * (v - *target);
                    }
                    self.restore(grads, *x, Some(gx));
                }
            }
            Op::MeanAbsDiff { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let s = gy[0] / T::lit(av.len().max(1) as f64);
                let sign = |p: T, q: T| {
                    if p > q {
                        s
                    } else if p < q {
                        -s
                    } else {
                        T::zero()
                    }
                };
                if let Some(mut ga) = self.take_grad(grads, *a) {
                    for ((o, &p), &q) in ga.iter_mut().zip(av).zip(bv) {
                        *o += sign(p, q);
                    }
                    self.restore(grads, *a, Some(ga));
                }
                if let Some(mut gb) = self.take_grad(grads, *b) {
                    for ((o, &p), &q) in gb.iter_mut().zip(av).zip(bv) {
                        *o -= sign(p, q);
                    }
                    self.restore(grads, *b, Some(gb));
                }
            }
            Op::WeightedSum { terms } => {
                for &(v, w) in terms {
                    if let Some(mut g) = self.take_grad(grads, v) {
                        g[0] += w * gy[0];
                        self.restore(grads, v, Some(g));
                    }
                }
            }
        }
    }

    /// Gradient buffer of `v` (zeroed on first use), or `None` when `v` is constant.
    fn take_grad(&self, grads: &mut [Option<Vec<T>>], v: Var) -> Option<Vec<T>> {
        if !self.needs(v) {
            return None;
        }
        Some(grads[v.0].take().unwrap_or_else(|| vec![T::zero(); self.value(v).numel()]))
    }

    fn restore(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Option<Vec<T>>) {
        if let Some(g) = g {
            grads[v.0] = Some(g);
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: &[T]) {
        if let Some(mut acc) = self.take_grad(grads, v) {
            for (a, &b) in acc.iter_mut().zip(g) {
                *a += b;
            }
            self.restore(grads, v, Some(acc));
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// `None` when `v` does not influence the loss or is constant.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Per-parameter gradients of a bound store, zero-filled where absent.
    pub fn for_params(&self, bound: &Bound, store: &ParamStore<T>) -> Vec<Vec<T>> {
        store
            .iter()
            .map(|(id, p)| match self.get(bound.var(id)) {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); p.value.numel()],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(t([1, 1, 2], &[1.0, -2.0]), true);
        let y = g.add(x, x).unwrap();
        let l = g.mse_to(y, 0.0);
        let grads = g.backward(l).unwrap();
        // l = mean((2x)²) → ∂l/∂x = 4x
        assert_eq!(grads.get(x).unwrap(), &[4.0, -8.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.constant(t([1, 1, 3], &[1.0, 2.0, 3.0]));
        let y = g.leaf(t([1, 1, 3], &[0.0, 0.0, 0.0]), true);
        let l = g.mean_abs_diff(x, y).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.get(y).unwrap(), &[-1.0 / 3.0; 3]);
    }

    #[test]
    fn transpose_and_narrow_shapes() {
        let mut g = Graph::new();
        let x = g.leaf(t([1, 2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), true);
        let tr = g.transpose(x);
        assert_eq!(g.value(tr).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let n = g.narrow(tr, 1, 2).unwrap();
        assert_eq!(g.shape(n), [1, 2, 2]);
        assert!(g.narrow(tr, 2, 2).is_err());
    }

    #[test]
    fn weight_norm_rescales_rows() {
        let mut g = Graph::new();
        let v = g.leaf(t([2, 1, 2], &[3.0, 4.0, 0.0, 2.0]), true);
        let s = g.leaf(t([2, 1, 1], &[10.0, 0.5]), true);
        let w = g.weight_norm(v, s).unwrap();
        assert_eq!(g.value(w).data(), &[6.0, 8.0, 0.0, 0.5]);
    }

    #[test]
    fn rejects_mismatched_conv() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::<f64>::zeros([1, 3, 10]));
        let w = g.constant(Tensor::zeros([4, 2, 3]));
        assert!(g.conv1d(x, w, None, ConvGeom::default()).is_err());
        let w = g.constant(Tensor::zeros([4, 3, 11]));
        assert!(g.conv1d(x, w, None, ConvGeom::default()).is_err());
    }
}
