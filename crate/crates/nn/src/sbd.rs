//! Sub-band discriminator: three time-axis modules over slices of a 16-band
//! decomposition and one frequency-axis module over a transposed 64-band
//! decomposition, each a stack of multi-scale dilated convolution banks.

use avocodo_core::{build_bank, PrototypeSpec, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disc::{same_pad, strided_len, DiscriminatorOutput, DISC_SLOPE};
use crate::error::{config_err, shape_err, Result};
use crate::graph::{Bound, Graph, Var};
use crate::kernels::ConvGeom;
use crate::layers::WnConv1d;
use crate::params::{Init, ParamStore};
use crate::pqmf::GraphPqmf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubModuleConfig {
    pub kernel_size: usize,
    pub filters: Vec<usize>,
    pub strides: Vec<usize>,
    /// One dilation set per MDC layer.
    pub dilations: Vec<Vec<usize>>,
    /// 1-based inclusive band range; ignored by the frequency-axis module.
    pub band_range: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbdConfig {
    pub time_bands: usize,
    pub freq_bands: usize,
    /// Training segment; fixes the fSBD input channel count.
    pub segment: usize,
    pub tsbd: Vec<SubModuleConfig>,
    pub fsbd: SubModuleConfig,
    pub post_kernel: usize,
    pub output_kernel: usize,
    pub time_bank: PrototypeSpec,
    pub freq_bank: PrototypeSpec,
}

impl Default for SbdConfig {
    fn default() -> Self {
        let t = |k: usize, d: [usize; 3], hi: usize| SubModuleConfig {
            kernel_size: k,
            filters: vec![64, 128, 256, 256, 256],
            strides: vec![1, 1, 3, 3, 1],
            dilations: vec![d.to_vec(); 5],
            band_range: (1, hi),
        };
        Self {
            time_bands: 16,
            freq_bands: 64,
            segment: 8192,
            tsbd: vec![t(7, [5, 7, 11], 6), t(5, [3, 5, 7], 11), t(3, [1, 2, 3], 16)],
            fsbd: SubModuleConfig {
                kernel_size: 5,
                filters: vec![32, 64, 128, 128, 128],
                strides: vec![1, 1, 3, 3, 1],
                dilations: vec![vec![1, 2, 3], vec![1, 2, 3], vec![1, 2, 3], vec![2, 3, 5], vec![2, 3, 5]],
                band_range: (1, 64),
            },
            post_kernel: 3,
            output_kernel: 3,
            time_bank: PrototypeSpec::for_bands(16).expect("published band count"),
            freq_bank: PrototypeSpec::for_bands(64).expect("published band count"),
        }
    }
}

impl SbdConfig {
    /// Three narrow MDC layers per module with the full band layout.
    pub fn tiny() -> Self {
        let t = |k: usize, d: [usize; 3], hi: usize| SubModuleConfig {
            kernel_size: k,
            filters: vec![8, 16, 16],
            strides: vec![1, 3, 1],
            dilations: vec![d.to_vec(); 3],
            band_range: (1, hi),
        };
        Self {
            tsbd: vec![t(7, [5, 7, 11], 6), t(5, [3, 5, 7], 11), t(3, [1, 2, 3], 16)],
            fsbd: SubModuleConfig {
                kernel_size: 5,
                filters: vec![8, 16, 16],
                strides: vec![1, 3, 1],
                dilations: vec![vec![1, 2, 3], vec![1, 2, 3], vec![2, 3, 5]],
                band_range: (1, 64),
            },
            ..Self::default()
        }
    }

    pub fn fsbd_channels(&self) -> usize {
        self.segment / self.freq_bands
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_bands < 2 || self.freq_bands < 2 || self.segment == 0 || self.segment % self.freq_bands != 0 {
            return config_err(format!("segment {} must be a multiple of {} bands", self.segment, self.freq_bands));
        }
        self.time_bank.validate()?;
        self.freq_bank.validate()?;
        if self.post_kernel % 2 == 0 || self.output_kernel % 2 == 0 {
            return config_err("post and output kernels must be odd");
        }
        for (q, m) in self.tsbd.iter().chain([&self.fsbd]).enumerate() {
            let n = m.filters.len();
            if n == 0 || m.strides.len() != n || m.dilations.len() != n {
                return config_err(format!("module {q}: filter, stride and dilation lists must have equal length"));
            }
            if m.kernel_size % 2 == 0 || m.strides.contains(&0) {
                return config_err(format!("module {q}: odd kernel and positive strides required"));
            }
            if m.dilations.iter().any(|d| d.is_empty() || d.contains(&0)) {
                return config_err(format!("module {q}: dilation sets must be nonempty and positive"));
            }
        }
        for m in &self.tsbd {
            let (lo, hi) = m.band_range;
            if lo == 0 || lo > hi || hi > self.time_bands {
                return config_err(format!("band range [{lo}:{hi}] outside 1..={}", self.time_bands));
            }
        }
        Ok(())
    }
}

/// Dilation branches summed, then a strided post-convolution and leaky ReLU.
#[derive(Clone, Debug)]
pub struct Mdc {
    branches: Vec<WnConv1d>,
    post: WnConv1d,
}

impl Mdc {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        dilations: &[usize],
        post_kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut branches = Vec::with_capacity(dilations.len());
        for (j, &d) in dilations.iter().enumerate() {
            let geom = ConvGeom::same(kernel, d);
            branches.push(WnConv1d::new(store, &format!("{name}.convs.{j}"), cin, cout, kernel, geom, Init::FanIn, rng)?);
        }
        let geom = ConvGeom { stride, padding: same_pad(post_kernel, 1), ..ConvGeom::default() };
        let post = WnConv1d::new(store, &format!("{name}.post"), cout, cout, post_kernel, geom, Init::FanIn, rng)?;
        Ok(Self { branches, post })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let outs = self.branches.iter().map(|c| c.forward(g, p, x)).collect::<Result<Vec<_>>>()?;
        let h = g.combine(&outs, 1.0)?;
        let h = self.post.forward(g, p, h)?;
        Ok(g.leaky_relu(h, DISC_SLOPE))
    }

    pub fn out_len(&self, len: usize) -> usize {
        strided_len(len, self.post.geom.stride)
    }
}

#[derive(Clone, Debug)]
pub struct MdcStack {
    layers: Vec<Mdc>,
    output: WnConv1d,
}

impl MdcStack {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<DiscriminatorOutput> {
        let mut h = x;
        let mut features = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = layer.forward(g, p, h)?;
            features.push(h);
        }
        let score = self.output.forward(g, p, h)?;
        Ok(DiscriminatorOutput { score, features })
    }

    pub fn layer(&self, i: usize) -> &Mdc {
        &self.layers[i]
    }

    pub fn score_len(&self, len: usize) -> usize {
        self.layers.iter().fold(len, |l, m| m.out_len(l))
    }
}

pub struct Sbd<T: Real> {
    config: SbdConfig,
    params: ParamStore<T>,
    tsbd: Vec<MdcStack>,
    fsbd: MdcStack,
    time_bank: GraphPqmf<T>,
    freq_bank: GraphPqmf<T>,
}

fn build_stack<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    m: &SubModuleConfig,
    cfg: &SbdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MdcStack> {
    let mut layers = Vec::with_capacity(m.filters.len());
    let mut c = cin;
    for (i, (&f, &s)) in m.filters.iter().zip(&m.strides).enumerate() {
        let mdc = Mdc::new(store, &format!("{name}.mdcs.{i}"), c, f, m.kernel_size, &m.dilations[i], cfg.post_kernel, s, rng)?;
        layers.push(mdc);
        c = f;
    }
    let ok = cfg.output_kernel;
    let output = WnConv1d::new(store, &format!("{name}.output"), c, 1, ok, ConvGeom::same(ok, 1), Init::FanIn, rng)?;
    Ok(MdcStack { layers, output })
}

impl<T: Real> Sbd<T> {
    pub fn new(config: SbdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut tsbd = Vec::with_capacity(config.tsbd.len());
        for (q, m) in config.tsbd.iter().enumerate() {
            let cin = m.band_range.1 - m.band_range.0 + 1;
            tsbd.push(build_stack(&mut params, &format!("sbd.t{q}"), cin, m, &config, &mut rng)?);
        }
        let fsbd = build_stack(&mut params, "sbd.f", config.fsbd_channels(), &config.fsbd, &config, &mut rng)?;
        let time_bank = GraphPqmf::new(build_bank(config.time_bands, &config.time_bank)?)?;
        let freq_bank = GraphPqmf::new(build_bank(config.freq_bands, &config.freq_bank)?)?;
        Ok(Self { config, params, tsbd, fsbd, time_bank, freq_bank })
    }

    pub fn config(&self) -> &SbdConfig {
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

    pub fn tsbd(&self, q: usize) -> &MdcStack {
        &self.tsbd[q]
    }

    pub fn fsbd(&self) -> &MdcStack {
        &self.fsbd
    }

    /// Inputs of the four modules: band slices of the 16-band split, then the
    /// transposed 64-band split.
    pub fn inputs(&self, g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
        let [_, c, len] = g.shape(x);
        if c != 1 || len % self.config.freq_bands != 0 {
            return shape_err(format!("waveform of {len} samples is not a multiple of {}", self.config.freq_bands));
        }
        if len / self.config.freq_bands != self.config.fsbd_channels() {
            return shape_err(format!(
                "frequency module is built for {}-sample segments, got {len}",
                self.config.segment
            ));
        }
        let bands = self.time_bank.analyze(g, x)?;
        let mut inputs = Vec::with_capacity(self.tsbd.len() + 1);
        for m in &self.config.tsbd {
            let (lo, hi) = m.band_range;
            inputs.push(g.narrow(bands, lo - 1, hi - lo + 1)?);
        }
        let wide = self.freq_bank.analyze(g, x)?;
        inputs.push(g.transpose(wide));
        Ok(inputs)
    }

    /// tSBD₁..tSBD₃ then fSBD.
    pub fn forward_sbd(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Vec<DiscriminatorOutput>> {
        let inputs = self.inputs(g, x)?;
        let mut outs = Vec::with_capacity(inputs.len());
        for (stack, &h) in self.tsbd.iter().chain([&self.fsbd]).zip(&inputs) {
            outs.push(stack.forward(g, p, h)?);
        }
        Ok(outs)
    }
}
