use avocodo_core::Real;
use rand::Rng;

use crate::error::{config_err, Result};
use crate::graph::{Bound, Graph, Var};
use crate::kernels::ConvGeom;
use crate::params::{fan_in_uniform, Init, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Weight-normalised `Conv1d` with bias. Registers `{name}.weight_g`,
/// `{name}.weight_v` and `{name}.bias`.
#[derive(Clone, Debug)]
pub struct WnConv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub geom: ConvGeom,
    g: ParamId,
    v: ParamId,
    b: ParamId,
}

/// `‖v‖` per slice along the first axis, shaped like a weight-norm gain.
fn row_norms<T: Real>(v: &Tensor<T>) -> Tensor<T> {
    let [rows, a, b] = v.shape();
    let inner = a * b;
    let data = (0..rows).map(|r| v.data()[r * inner..(r + 1) * inner].iter().map(|&x| x * x).sum::<T>().sqrt());
    Tensor::new([rows, 1, 1], data.collect()).expect("one gain per row")
}

impl WnConv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geom: ConvGeom,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 || in_channels == 0 || out_channels == 0 {
            return config_err(format!("{name}: empty convolution"));
        }
        if geom.groups == 0 || in_channels % geom.groups != 0 || out_channels % geom.groups != 0 {
            return config_err(format!(
                "{name}: {} groups do not divide {in_channels}→{out_channels} channels",
                geom.groups
            ));
        }
        let cin_g = in_channels / geom.groups;
        let fan_in = cin_g * kernel;
        let v = init.sample::<T, _>([out_channels, cin_g, kernel], fan_in, rng);
        let g = row_norms(&v);
        let bias = Tensor::new([1, 1, out_channels], fan_in_uniform(out_channels, fan_in, rng))?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            geom,
            g: store.add(format!("{name}.weight_g"), g),
            v: store.add(format!("{name}.weight_v"), v),
            b: store.add(format!("{name}.bias"), bias),
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let w = g.weight_norm(p.var(self.v), p.var(self.g))?;
        g.conv1d(x, w, Some(p.var(self.b)), self.geom)
    }

    pub fn out_len(&self, len: usize) -> Option<usize> {
        self.geom.out_len(len, self.kernel)
    }

    pub fn weight_ids(&self) -> (ParamId, ParamId, ParamId) {
        (self.g, self.v, self.b)
    }
}

/// Weight-normalised `ConvTranspose1d` with bias; the norm runs over input
/// channels (weight layout `[in, out, kernel]`).
#[derive(Clone, Debug)]
pub struct WnConvTranspose1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    g: ParamId,
    v: ParamId,
    b: ParamId,
}

impl WnConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
            return config_err(format!("{name}: empty transposed convolution"));
        }
        // the fan-in PyTorch uses for a transposed weight is out·kernel
        let fan_in = out_channels * kernel;
        let v = init.sample::<T, _>([in_channels, out_channels, kernel], fan_in, rng);
        let g = row_norms(&v);
        let bias = Tensor::new([1, 1, out_channels], fan_in_uniform(out_channels, fan_in, rng))?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            g: store.add(format!("{name}.weight_g"), g),
            v: store.add(format!("{name}.weight_v"), v),
            b: store.add(format!("{name}.bias"), bias),
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let w = g.weight_norm(p.var(self.v), p.var(self.g))?;
        g.conv_transpose1d(x, w, Some(p.var(self.b)), self.stride, self.padding)
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel - 2 * self.padding
    }
}
