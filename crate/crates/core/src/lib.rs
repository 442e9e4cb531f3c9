//! Signal-processing half of the Avocodo vocoder.
//!
//! * [`filterbank`] designs and applies pseudo-QMF banks.
//! * [`features`] computes STFT magnitudes and log-mel rasters, with an
//!   exact vector-Jacobian product for the mel map.
//! * [`artifact`] decimates and expands signals the naive and the filtered
//!   way and measures where tone energy ends up.
//! * [`metrics`] holds the objective evaluation suite.
//! * [`io`] reads and writes WAV plus the raw `AVSB`/`AVML` containers.
//!
//! Everything numeric is generic over [`Real`]; the aliases below fix the
//! scalar for the common cases.

pub mod artifact;
pub mod error;
pub mod features;
pub mod filterbank;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod waveform;

pub use error::{Error, Result};
pub use features::{MelExtractor, MelSpectrogram, StftConfig};
pub use filterbank::{build_bank, design_prototype, PqmfBank, PrototypeSpec, SubbandSignals};
pub use scalar::Real;
pub use waveform::{Waveform, SAMPLE_RATE};

pub type Waveform32 = Waveform<f32>;
pub type Waveform64 = Waveform<f64>;
pub type PqmfBank32 = PqmfBank<f32>;
pub type PqmfBank64 = PqmfBank<f64>;
pub type MelSpectrogram32 = MelSpectrogram<f32>;
pub type MelSpectrogram64 = MelSpectrogram<f64>;
pub type MelExtractor32 = MelExtractor<f32>;
pub type MelExtractor64 = MelExtractor<f64>;
