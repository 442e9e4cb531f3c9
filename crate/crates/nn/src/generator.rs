//! Upsampling generator with two intermediate-resolution outputs.
//!
//! Mel frames pass through a stem convolution and four stages of
//! (leaky ReLU, transposed convolution, multi-receptive-field fusion). After
//! the second and third stages a one-channel projection with `tanh` emits a
//! waveform at 1/4 and 1/2 of the final rate; the last stage feeds the
//! full-rate output head.

use avocodo_core::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::graph::{Bound, Graph, Var};
use crate::kernels::ConvGeom;
use crate::layers::{WnConv1d, WnConvTranspose1d};
use crate::params::{Init, ParamStore};
use crate::tensor::Tensor;

pub const HOP_SIZE: usize = 256;
/// Slope of the activations inside the upsampling stages.
pub const STAGE_SLOPE: f64 = 0.1;
/// Slope in front of the output heads (the `leaky_relu` default).
pub const HEAD_SLOPE: f64 = 0.01;
pub const INIT_STD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_mels: usize,
    pub initial_channels: usize,
    pub upsample_rates: Vec<usize>,
    pub upsample_kernel_sizes: Vec<usize>,
    pub mrf_kernel_sizes: Vec<usize>,
    pub mrf_dilations: Vec<Vec<usize>>,
    pub stem_kernel: usize,
    pub projection_kernel: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::v1()
    }
}

impl GeneratorConfig {
    pub fn v1() -> Self {
        Self {
            n_mels: 80,
            initial_channels: 512,
            upsample_rates: vec![8, 8, 2, 2],
            upsample_kernel_sizes: vec![16, 16, 4, 4],
            mrf_kernel_sizes: vec![3, 7, 11],
            mrf_dilations: vec![vec![1, 3, 5]; 3],
            stem_kernel: 7,
            projection_kernel: 7,
        }
    }

    pub fn v2() -> Self {
        Self { initial_channels: 128, ..Self::v1() }
    }

    /// V2 topology at a quarter of the width.
    pub fn v2_tiny() -> Self {
        Self { initial_channels: 32, ..Self::v1() }
    }

    /// Smallest useful network: 16 channels and one two-layer residual stack.
    pub fn tiny() -> Self {
        Self { initial_channels: 16, mrf_kernel_sizes: vec![3], mrf_dilations: vec![vec![1, 3]], ..Self::v1() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.upsample_rates.len();
        if n < 3 {
            return config_err("at least three upsampling stages are needed for the intermediate outputs");
        }
        if self.upsample_kernel_sizes.len() != n {
            return config_err("one transposed-convolution kernel per upsampling stage");
        }
        if self.upsample_rates.iter().product::<usize>() != HOP_SIZE {
            return config_err(format!("upsampling rates must multiply to {HOP_SIZE}"));
        }
        for (&u, &k) in self.upsample_rates.iter().zip(&self.upsample_kernel_sizes) {
            if u == 0 || k < u || (k - u) % 2 != 0 {
                return config_err(format!("kernel {k} cannot upsample exactly by {u}"));
            }
        }
        if self.mrf_kernel_sizes.len() != self.mrf_dilations.len() {
            return config_err("one dilation list per residual kernel size");
        }
        if self.mrf_kernel_sizes.iter().any(|k| k % 2 == 0) || self.mrf_dilations.iter().flatten().any(|&d| d == 0) {
            return config_err("residual kernels must be odd and dilations positive");
        }
        if self.initial_channels >> n == 0 || self.initial_channels % (1 << n) != 0 {
            return config_err(format!("{} channels cannot be halved {n} times", self.initial_channels));
        }
        if self.n_mels == 0 || self.stem_kernel % 2 == 0 || self.projection_kernel % 2 == 0 {
            return config_err("stem and projection kernels must be odd");
        }
        Ok(())
    }

    /// Stage indices after which an intermediate waveform is emitted.
    pub fn tap_stages(&self) -> [usize; 2] {
        let n = self.upsample_rates.len();
        [n - 3, n - 2]
    }

    pub fn channels_after(&self, stage: usize) -> usize {
        self.initial_channels >> (stage + 1)
    }
}

/// One dilated residual stack: per dilation `x += conv₁(lrelu(conv_d(lrelu(x))))`.
#[derive(Clone, Debug)]
pub struct ResidualStack {
    pairs: Vec<(WnConv1d, WnConv1d)>,
}

impl ResidualStack {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        kernel: usize,
        dilations: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(dilations.len());
        for (j, &d) in dilations.iter().enumerate() {
            let dilated = WnConv1d::new(
                store,
                &format!("{name}.convs1.{j}"),
                channels,
                channels,
                kernel,
                ConvGeom::same(kernel, d),
                Init::Normal(INIT_STD),
                rng,
            )?;
            let plain = WnConv1d::new(
                store,
                &format!("{name}.convs2.{j}"),
                channels,
                channels,
                kernel,
                ConvGeom::same(kernel, 1),
                Init::Normal(INIT_STD),
                rng,
            )?;
            pairs.push((dilated, plain));
        }
        Ok(Self { pairs })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, mut x: Var) -> Result<Var> {
        for (dilated, plain) in &self.pairs {
            let h = g.leaky_relu(x, STAGE_SLOPE);
            let h = dilated.forward(g, p, h)?;
            let h = g.leaky_relu(h, STAGE_SLOPE);
            let h = plain.forward(g, p, h)?;
            x = g.add(h, x)?;
        }
        Ok(x)
    }
}

/// Multi-receptive-field fusion: mean of parallel residual stacks.
#[derive(Clone, Debug)]
pub struct Mrf {
    stacks: Vec<ResidualStack>,
}

impl Mrf {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        if self.stacks.is_empty() {
            return Ok(x);
        }
        let outs = self.stacks.iter().map(|s| s.forward(g, p, x)).collect::<Result<Vec<_>>>()?;
        g.mean_of(&outs)
    }
}

struct Stage {
    upsample: WnConvTranspose1d,
    mrf: Mrf,
}

pub struct Generator<T: Real> {
    config: GeneratorConfig,
    params: ParamStore<T>,
    stem: WnConv1d,
    stages: Vec<Stage>,
    projections: [WnConv1d; 2],
    head: WnConv1d,
}

/// Waveforms at 1/4, 1/2 and full rate, each `[batch, 1, len]`.
#[derive(Clone, Copy, Debug)]
pub struct MultiScaleOutputs {
    pub quarter: Var,
    pub half: Var,
    pub full: Var,
}

impl MultiScaleOutputs {
    pub fn as_array(&self) -> [Var; 3] {
        [self.quarter, self.half, self.full]
    }
}

impl<T: Real> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c0 = config.initial_channels;
        let stem = WnConv1d::new(
            &mut params,
            "conv_pre",
            config.n_mels,
            c0,
            config.stem_kernel,
            ConvGeom::same(config.stem_kernel, 1),
            Init::Normal(INIT_STD),
            &mut rng,
        )?;
        let mut stages = Vec::new();
        for (i, (&u, &k)) in config.upsample_rates.iter().zip(&config.upsample_kernel_sizes).enumerate() {
            let (cin, cout) = (c0 >> i, c0 >> (i + 1));
            let upsample = WnConvTranspose1d::new(
                &mut params,
                &format!("ups.{i}"),
                cin,
                cout,
                k,
                u,
                (k - u) / 2,
                Init::Normal(INIT_STD),
                &mut rng,
            )?;
            let mut stacks = Vec::new();
            for (j, (&rk, dil)) in config.mrf_kernel_sizes.iter().zip(&config.mrf_dilations).enumerate() {
                let idx = i * config.mrf_kernel_sizes.len() + j;
                stacks.push(ResidualStack::new(&mut params, &format!("resblocks.{idx}"), cout, rk, dil, &mut rng)?);
            }
            stages.push(Stage { upsample, mrf: Mrf { stacks } });
        }
        let pk = config.projection_kernel;
        let taps = config.tap_stages();
        let projection = |j: usize, params: &mut ParamStore<T>, rng: &mut ChaCha8Rng| {
            let ch = config.channels_after(taps[j]);
            WnConv1d::new(params, &format!("proj.{j}"), ch, 1, pk, ConvGeom::same(pk, 1), Init::Normal(INIT_STD), rng)
        };
        let projections = [projection(0, &mut params, &mut rng)?, projection(1, &mut params, &mut rng)?];
        let last = config.channels_after(config.upsample_rates.len() - 1);
        let head = WnConv1d::new(
            &mut params,
            "conv_post",
            last,
            1,
            pk,
            ConvGeom::same(pk, 1),
            Init::Normal(INIT_STD),
            &mut rng,
        )?;
        Ok(Self { config, params, stem, stages, projections, head })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn count_parameters(&self) -> usize {
        self.params.numel()
    }

    /// The fusion block of stage `i`, for isolated tests.
    pub fn mrf(&self, stage: usize) -> &Mrf {
        &self.stages[stage].mrf
    }

    /// `mel` is `[batch, n_mels, frames]`; outputs have `64F`, `128F`, `256F` samples.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, mel: Var) -> Result<MultiScaleOutputs> {
        let [_, bands, frames] = g.shape(mel);
        if bands != self.config.n_mels {
            return shape_err(format!("expected {} mel bands, got {bands}", self.config.n_mels));
        }
        if frames == 0 {
            return shape_err("mel spectrogram has no frames");
        }
        let taps = self.config.tap_stages();
        let mut x = self.stem.forward(g, p, mel)?;
        let mut taps_out = Vec::with_capacity(2);
        for (i, stage) in self.stages.iter().enumerate() {
            x = g.leaky_relu(x, STAGE_SLOPE);
            x = stage.upsample.forward(g, p, x)?;
            x = stage.mrf.forward(g, p, x)?;
            if let Some(j) = taps.iter().position(|&t| t == i) {
                let h = g.leaky_relu(x, HEAD_SLOPE);
                let h = self.projections[j].forward(g, p, h)?;
                taps_out.push(g.tanh(h));
            }
        }
        let h = g.leaky_relu(x, HEAD_SLOPE);
        let h = self.head.forward(g, p, h)?;
        let full = g.tanh(h);
        Ok(MultiScaleOutputs { quarter: taps_out[0], half: taps_out[1], full })
    }

    /// Full-rate waveform for one mel raster (`[n_mels, frames]`, mel-major).
    pub fn synthesize(&self, mel: &avocodo_core::MelSpectrogram<T>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let p = g.bind(&self.params, false);
        let m = g.constant(Tensor::new([1, mel.n_mels, mel.n_frames], mel.values.clone())?);
        let out = self.forward(&mut g, &p, m)?;
        Ok(g.value(out.full).data().to_vec())
    }
}
