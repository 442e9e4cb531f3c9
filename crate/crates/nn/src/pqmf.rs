//! PQMF analysis expressed as a fixed strided convolution so gradients can
//! flow through sub-band decompositions.

use avocodo_core::{PqmfBank, PrototypeSpec, Real};

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::tensor::Tensor;

/// Constant-weight analysis bank, `[B,1,L] → [B,N,L/N]`.
///
/// Matches [`PqmfBank::analyze`] sample for sample: the taps are stored
/// reversed because the graph convolution is a cross-correlation.
#[derive(Clone, Debug)]
pub struct GraphPqmf<T: Real> {
    bank: PqmfBank<T>,
    weights: Tensor<T>,
    lowpass: Tensor<T>,
}

impl<T: Real> GraphPqmf<T> {
    pub fn new(bank: PqmfBank<T>) -> Result<Self> {
        if bank.taps() % 2 != 0 {
            return shape_err(format!("odd tap count {} has no centred alignment", bank.taps()));
        }
        let n = bank.n_bands();
        let len = bank.filter_len();
        let mut w = Vec::with_capacity(n * len);
        for k in 0..n {
            w.extend(bank.analysis_filter(k).iter().rev());
        }
        let weights = Tensor::new([n, 1, len], w)?;
        let lowpass = Tensor::new([1, 1, len], bank.analysis_filter(0).iter().rev().copied().collect())?;
        Ok(Self { bank, weights, lowpass })
    }

    /// Bank with the default prototype for `n_bands`.
    pub fn with_bands(n_bands: usize) -> Result<Self> {
        Self::new(avocodo_core::build_bank(n_bands, &PrototypeSpec::default_for(n_bands)?)?)
    }

    pub fn bank(&self) -> &PqmfBank<T> {
        &self.bank
    }

    pub fn n_bands(&self) -> usize {
        self.bank.n_bands()
    }

    fn geom(&self) -> ConvGeom {
        ConvGeom { stride: self.bank.n_bands(), padding: self.bank.pad(), ..ConvGeom::default() }
    }

    fn check(&self, g: &Graph<T>, x: Var) -> Result<()> {
        let [_, c, l] = g.shape(x);
        if c != 1 {
            return shape_err(format!("sub-band analysis takes one channel, got {c}"));
        }
        if l == 0 || l % self.n_bands() != 0 {
            return shape_err(format!("length {l} is not a multiple of {} bands", self.n_bands()));
        }
        Ok(())
    }

    pub fn analyze(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check(g, x)?;
        let w = g.constant(self.weights.clone());
        g.conv1d(x, w, None, self.geom())
    }

    /// First band only: anti-aliased decimation by `N`.
    pub fn lowpass_downsample(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check(g, x)?;
        let w = g.constant(self.lowpass.clone());
        g.conv1d(x, w, None, self.geom())
    }
}
