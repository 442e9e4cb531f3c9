//! Collaborative multi-band discriminator.
//!
//! Three sub-modules judge the generator outputs at 1/4, 1/2 and full rate.
//! The two lower-rate sub-modules also judge PQMF-decimated copies of the
//! full-rate output with the same weights, which ties the intermediate
//! outputs to the band-limited content of the final waveform.

use avocodo_core::{build_bank, PrototypeSpec, Real, Waveform};
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
#[serde(default)]
pub struct CombdConfig {
    /// Kernel sizes per sub-module, lowest resolution first.
    pub kernel_sizes: Vec<Vec<usize>>,
    pub filters: Vec<usize>,
    pub groups: Vec<usize>,
    pub strides: Vec<usize>,
    pub output_kernel: usize,
    /// Prototype of the 4-band bank that produces `x̂'₁` and `x₁`.
    pub quarter_bank: PrototypeSpec,
    /// Prototype of the 2-band bank that produces `x̂'₂` and `x₂`.
    pub half_bank: PrototypeSpec,
}

fn table_spec(n: usize) -> PrototypeSpec {
    PrototypeSpec::for_bands(n).expect("published band count")
}

impl Default for CombdConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: vec![
                vec![7, 11, 11, 11, 11, 5],
                vec![11, 21, 21, 21, 21, 5],
                vec![15, 41, 41, 41, 41, 5],
            ],
            filters: vec![16, 64, 256, 1024, 1024, 1024],
            groups: vec![1, 4, 16, 64, 256, 1],
            strides: vec![1, 1, 4, 4, 4, 1],
            output_kernel: 3,
            quarter_bank: table_spec(4),
            half_bank: table_spec(2),
        }
    }
}

impl CombdConfig {
    /// Four narrow layers per sub-module; same topology, desk-scale cost.
    pub fn tiny() -> Self {
        Self {
            kernel_sizes: vec![vec![5, 7, 7, 3], vec![7, 11, 11, 3], vec![11, 21, 21, 3]],
            filters: vec![4, 8, 16, 16],
            groups: vec![1, 2, 4, 1],
            strides: vec![1, 4, 4, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.filters.len();
        if self.kernel_sizes.len() != 3 {
            return config_err("three sub-modules are required");
        }
        if n == 0 || self.groups.len() != n || self.strides.len() != n || self.kernel_sizes.iter().any(|k| k.len() != n) {
            return config_err("kernel, filter, group and stride lists must have equal length");
        }
        let mut cin = 1;
        for (&f, &g) in self.filters.iter().zip(&self.groups) {
            if g == 0 || f % g != 0 || cin % g != 0 {
                return config_err(format!("{g} groups do not divide {cin}→{f} channels"));
            }
            cin = f;
        }
        self.quarter_bank.validate()?;
        self.half_bank.validate()?;
        if self.strides.contains(&0) {
            return config_err("strides must be positive");
        }
        if self.kernel_sizes.iter().flatten().chain([&self.output_kernel]).any(|k| k % 2 == 0) {
            return config_err("kernels must be odd for same padding");
        }
        Ok(())
    }

    /// Score-map length for an input of `len` samples.
    pub fn score_len(&self, len: usize) -> usize {
        self.strides.iter().fold(len, |l, &s| strided_len(l, s))
    }
}

/// One strided grouped convolution stack followed by a one-channel output conv.
#[derive(Clone, Debug)]
pub struct ConvStack {
    layers: Vec<WnConv1d>,
    output: WnConv1d,
}

impl ConvStack {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<DiscriminatorOutput> {
        let mut h = x;
        let mut features = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = layer.forward(g, p, h)?;
            h = g.leaky_relu(h, DISC_SLOPE);
            features.push(h);
        }
        let score = self.output.forward(g, p, h)?;
        Ok(DiscriminatorOutput { score, features })
    }

    /// Input samples that influence one score element.
    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let mut jump = 1;
        for conv in self.layers.iter().chain([&self.output]) {
            field += (conv.kernel - 1) * conv.geom.dilation * jump;
            jump *= conv.geom.stride;
        }
        field
    }
}

/// Scores of the three direct branches and the two decimated branches.
#[derive(Clone, Debug)]
pub struct CombdOutputs {
    pub direct: Vec<DiscriminatorOutput>,
    pub decimated: Vec<DiscriminatorOutput>,
}

pub struct Combd<T: Real> {
    config: CombdConfig,
    params: ParamStore<T>,
    subs: Vec<ConvStack>,
    quarter: GraphPqmf<T>,
    half: GraphPqmf<T>,
}

impl<T: Real> Combd<T> {
    pub fn new(config: CombdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut subs = Vec::with_capacity(3);
        for (s, kernels) in config.kernel_sizes.iter().enumerate() {
            let mut layers = Vec::with_capacity(kernels.len());
            let mut cin = 1;
            for (i, &k) in kernels.iter().enumerate() {
                let geom = ConvGeom {
                    stride: config.strides[i],
                    padding: same_pad(k, 1),
                    dilation: 1,
                    groups: config.groups[i],
                };
                let name = format!("combd.{s}.convs.{i}");
                layers.push(WnConv1d::new(&mut params, &name, cin, config.filters[i], k, geom, Init::FanIn, &mut rng)?);
                cin = config.filters[i];
            }
            let ok = config.output_kernel;
            let output = WnConv1d::new(
                &mut params,
                &format!("combd.{s}.output"),
                cin,
                1,
                ok,
                ConvGeom::same(ok, 1),
                Init::FanIn,
                &mut rng,
            )?;
            subs.push(ConvStack { layers, output });
        }
        Ok(Self {
            quarter: GraphPqmf::new(build_bank(4, &config.quarter_bank)?)?,
            half: GraphPqmf::new(build_bank(2, &config.half_bank)?)?,
            config,
            params,
            subs,
        })
    }

    pub fn config(&self) -> &CombdConfig {
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

    /// Sub-module `k` (0 = quarter rate).
    pub fn sub_module(&self, k: usize) -> &ConvStack {
        &self.subs[k]
    }

    pub fn forward_sub(&self, g: &mut Graph<T>, p: &Bound, k: usize, x: Var) -> Result<DiscriminatorOutput> {
        self.subs[k].forward(g, p, x)
    }

    /// `x̂'₁`, `x̂'₂`: the full-rate waveform decimated by 4 and by 2.
    pub fn decimate(&self, g: &mut Graph<T>, full: Var) -> Result<[Var; 2]> {
        Ok([self.quarter.lowpass_downsample(g, full)?, self.half.lowpass_downsample(g, full)?])
    }

    /// Judges `[x̂₁, x̂₂, x̂₃]` and the decimated copies of `x̂₃`.
    pub fn forward_scales(&self, g: &mut Graph<T>, p: &Bound, outs: [Var; 3]) -> Result<CombdOutputs> {
        check_scales(g, outs)?;
        let direct = (0..3).map(|k| self.forward_sub(g, p, k, outs[k])).collect::<Result<Vec<_>>>()?;
        let primes = self.decimate(g, outs[2])?;
        let decimated = (0..2).map(|k| self.forward_sub(g, p, k, primes[k])).collect::<Result<Vec<_>>>()?;
        Ok(CombdOutputs { direct, decimated })
    }

    /// Ground-truth scores for `[x₁, x₂, x₃]`.
    pub fn forward_real(&self, g: &mut Graph<T>, p: &Bound, reals: [Var; 3]) -> Result<Vec<DiscriminatorOutput>> {
        check_scales(g, reals)?;
        (0..3).map(|k| self.forward_sub(g, p, k, reals[k])).collect()
    }

    /// `x₁`, `x₂`, `x₃` from a waveform of `256·F` samples.
    pub fn real_targets(&self, x: &Waveform<T>) -> Result<[Waveform<T>; 3]> {
        if x.is_empty() || x.len() % 4 != 0 {
            return shape_err(format!("{} samples do not split into quarters", x.len()));
        }
        let x1 = self.quarter.bank().lowpass_downsample(x)?;
        let x2 = self.half.bank().lowpass_downsample(x)?;
        Ok([x1, x2, x.clone()])
    }
}

pub(crate) fn check_scales<T: Real>(g: &Graph<T>, outs: [Var; 3]) -> Result<()> {
    let len = g.shape(outs[2])[2];
    for (k, div) in [(0, 4), (1, 2)] {
        if len % div != 0 || g.shape(outs[k])[2] != len / div {
            return shape_err(format!(
                "branch {} has {} samples, expected {} for a full-rate length {len}",
                k + 1,
                g.shape(outs[k])[2],
                len / div
            ));
        }
    }
    if outs.iter().any(|&v| g.shape(v)[1] != 1) {
        return shape_err("waveform branches must have one channel");
    }
    Ok(())
}
