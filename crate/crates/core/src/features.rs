//! STFT magnitude and log-mel features.
//!
//! Framing follows the usual vocoder convention: the signal is reflection
//! padded by `(fft − hop)/2` samples on both sides and framed without
//! further centring, so a waveform of `256·F` samples yields exactly `F`
//! frames at hop 256.

use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::scalar::Real;
use crate::waveform::Waveform;

/// Lower clamp applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-5;
pub const N_MELS: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub win_size: usize,
    pub hop_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 1024, win_size: 1024, hop_size: 256 }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_size == 0 || self.win_size == 0 || self.fft_size < 2 {
            return param_err("STFT sizes must be positive");
        }
        if self.win_size > self.fft_size {
            return param_err("window longer than FFT");
        }
        if self.hop_size > self.win_size {
            return param_err("hop longer than window");
        }
        if self.fft_size % 2 != 0 || (self.fft_size - self.hop_size) % 2 != 0 {
            return param_err("FFT size and fft − hop must be even");
        }
        Ok(())
    }

    /// Reflection padding applied to each side.
    pub fn padding(&self) -> usize {
        (self.fft_size - self.hop_size) / 2
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames for `len` input samples (0 if too short).
    pub fn n_frames(&self, len: usize) -> usize {
        let padded = len + 2 * self.padding();
        if len == 0 || padded < self.fft_size {
            0
        } else {
            (padded - self.fft_size) / self.hop_size + 1
        }
    }
}

/// Index into a signal of length `len` under whole-sample symmetric reflection.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

/// Log-mel raster, mel-major (`n_mels` rows of `n_frames` values).
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram<T> {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> MelSpectrogram<T> {
    pub fn new(n_mels: usize, n_frames: usize, values: Vec<T>, sample_rate: u32) -> Result<Self> {
        if values.len() != n_mels * n_frames {
            return param_err(format!("{} values for a {n_mels}×{n_frames} raster", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param_err("mel raster contains non-finite values");
        }
        Ok(Self { n_mels, n_frames, values, sample_rate })
    }

    pub fn get(&self, mel: usize, frame: usize) -> T {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[T] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }

    /// Column `frame` copied out as a vector of length `n_mels`.
    pub fn frame(&self, frame: usize) -> Vec<T> {
        (0..self.n_mels).map(|m| self.get(m, frame)).collect()
    }

    pub fn cast<U: Real>(&self) -> MelSpectrogram<U> {
        MelSpectrogram {
            n_mels: self.n_mels,
            n_frames: self.n_frames,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One triangular mel filter stored as a contiguous run of FFT bins.
#[derive(Clone, Debug)]
pub struct MelFilter<T> {
    pub first_bin: usize,
    pub weights: Vec<T>,
}

/// HTK-scale triangular filters spanning `[f_min, f_max]`, peak weight 1.
pub fn mel_filterbank<T: Real>(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Vec<MelFilter<T>>> {
    if n_mels == 0 || !(0.0 <= f_min && f_min < f_max && f_max <= sample_rate as f64 / 2.0) {
        return param_err(format!("bad mel range {f_min}..{f_max} Hz for {n_mels} filters"));
    }
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> =
        (0..n_mels + 2).map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64)).collect();
    let n_bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut filters = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut first = None;
        let mut weights = Vec::new();
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < hi {
                if f <= centre { (f - lo) / (centre - lo) } else { (hi - f) / (hi - centre) }
            } else {
                0.0
            };
            if w > 0.0 {
                first.get_or_insert(k);
                weights.push(T::lit(w));
            } else if first.is_some() {
                break;
            }
        }
        match first {
            Some(first_bin) => filters.push(MelFilter { first_bin, weights }),
            None => return param_err(format!("mel filter {m} covers no FFT bin; lower n_mels or raise fft_size")),
        }
    }
    Ok(filters)
}

/// Complex STFT frames, frame-major (`n_frames × n_bins`).
#[derive(Clone, Debug)]
pub struct Spectrum<T> {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<Complex<T>>,
}

/// Intermediate values of one mel evaluation, reused by [`MelExtractor::backward`].
#[derive(Clone, Debug)]
pub struct MelTrace<T> {
    input_len: usize,
    spectrum: Spectrum<T>,
    magnitude: Vec<T>,
    mel_linear: Vec<T>,
}

/// STFT + mel front end with a cached FFT plan.
#[derive(Clone)]
pub struct MelExtractor<T: Real> {
    cfg: StftConfig,
    sample_rate: u32,
    window: Vec<T>,
    filters: Vec<MelFilter<T>>,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for MelExtractor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelExtractor")
            .field("cfg", &self.cfg)
            .field("sample_rate", &self.sample_rate)
            .field("n_mels", &self.filters.len())
            .finish()
    }
}

impl<T: Real> MelExtractor<T> {
    pub fn new(cfg: StftConfig, sample_rate: u32, n_mels: usize) -> Result<Self> {
        cfg.validate()?;
        let filters = mel_filterbank(n_mels, cfg.fft_size, sample_rate, 0.0, sample_rate as f64 / 2.0)?;
        // periodic Hann, centred inside the FFT frame
        let offset = (cfg.fft_size - cfg.win_size) / 2;
        let mut window = vec![T::zero(); cfg.fft_size];
        for n in 0..cfg.win_size {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / cfg.win_size as f64).cos();
            window[offset + n] = T::lit(w);
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(cfg.fft_size);
        let ifft = planner.plan_fft_inverse(cfg.fft_size);
        Ok(Self { cfg, sample_rate, window, filters, fft, ifft })
    }

    /// The standard 1024/1024/256, 80-band front end at `sample_rate`.
    pub fn standard(sample_rate: u32) -> Result<Self> {
        Self::new(StftConfig::default(), sample_rate, N_MELS)
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[MelFilter<T>] {
        &self.filters
    }

    pub fn spectrum(&self, x: &[T]) -> Result<Spectrum<T>> {
        if x.is_empty() {
            return param_err("cannot transform an empty signal");
        }
        let n_frames = self.cfg.n_frames(x.len());
        if n_frames == 0 {
            return param_err(format!("{} samples is shorter than one hop", x.len()));
        }
        let n_fft = self.cfg.fft_size;
        let n_bins = self.cfg.n_bins();
        let pad = self.cfg.padding() as isize;
        let mut data = Vec::with_capacity(n_frames * n_bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
        for f in 0..n_frames {
            let start = (f * self.cfg.hop_size) as isize - pad;
            for (n, slot) in buf.iter_mut().enumerate() {
                let s = x[reflect_index(start + n as isize, x.len())];
                *slot = Complex::new(s * self.window[n], T::zero());
            }
            self.fft.process(&mut buf);
            data.extend_from_slice(&buf[..n_bins]);
        }
        Ok(Spectrum { n_frames, n_bins, data })
    }

    /// Magnitude STFT, bin-major (`n_bins × n_frames`).
    pub fn stft_magnitude(&self, x: &[T]) -> Result<(usize, Vec<T>)> {
        let spec = self.spectrum(x)?;
        let mut out = vec![T::zero(); spec.n_bins * spec.n_frames];
        for f in 0..spec.n_frames {
            for k in 0..spec.n_bins {
                out[k * spec.n_frames + f] = spec.data[f * spec.n_bins + k].norm();
            }
        }
        Ok((spec.n_frames, out))
    }

    pub fn mel_spectrogram(&self, x: &Waveform<T>) -> Result<MelSpectrogram<T>> {
        Ok(self.mel_with_trace(&x.samples)?.0)
    }

    pub fn mel_with_trace(&self, x: &[T]) -> Result<(MelSpectrogram<T>, MelTrace<T>)> {
        let spectrum = self.spectrum(x)?;
        let (n_frames, n_bins) = (spectrum.n_frames, spectrum.n_bins);
        let magnitude: Vec<T> = spectrum.data.iter().map(|c| c.norm()).collect();
        let n_mels = self.filters.len();
        let floor = T::lit(LOG_FLOOR);
        let mut mel_linear = vec![T::zero(); n_mels * n_frames];
        let mut values = vec![T::zero(); n_mels * n_frames];
        for f in 0..n_frames {
            let mag = &magnitude[f * n_bins..(f + 1) * n_bins];
            for (m, filt) in self.filters.iter().enumerate() {
                let e: T = filt.weights.iter().zip(&mag[filt.first_bin..]).map(|(&w, &a)| w * a).sum();
                mel_linear[m * n_frames + f] = e;
                values[m * n_frames + f] = e.max(floor).ln();
            }
        }
        let mel = MelSpectrogram { n_mels, n_frames, values, sample_rate: self.sample_rate };
        Ok((mel, MelTrace { input_len: x.len(), spectrum, magnitude, mel_linear }))
    }

    /// Vector-Jacobian product of the log-mel map: given `∂L/∂mel`
    /// (mel-major, same layout as the forward output) returns `∂L/∂x`.
    pub fn backward(&self, trace: &MelTrace<T>, grad_mel: &[T]) -> Vec<T> {
        let n_frames = trace.spectrum.n_frames;
        let n_bins = trace.spectrum.n_bins;
        let n_fft = self.cfg.fft_size;
        let floor = T::lit(LOG_FLOOR);
        let pad = self.cfg.padding() as isize;
        let mut grad_x = vec![T::zero(); trace.input_len];
        let mut g_mag = vec![T::zero(); n_bins];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
        for f in 0..n_frames {
            g_mag.iter_mut().for_each(|v| *v = T::zero());
            let mut any = false;
            for (m, filt) in self.filters.iter().enumerate() {
                let e = trace.mel_linear[m * n_frames + f];
                if e < floor {
                    continue;
                }
                let g = grad_mel[m * n_frames + f] / e;
                if g == T::zero() {
                    continue;
                }
                any = true;
                for (i, &w) in filt.weights.iter().enumerate() {
                    g_mag[filt.first_bin + i] += g * w;
                }
            }
            if !any {
                continue;
            }
            // |X_k| → (Re, Im) and then back through the real-input DFT:
            // ∂L/∂s_n = Re Σ_k G_k e^{+2πikn/N} over the one-sided bins.
            for c in buf.iter_mut() {
                *c = Complex::new(T::zero(), T::zero());
            }
            for k in 0..n_bins {
                let a = trace.magnitude[f * n_bins + k];
                if a > T::zero() {
                    let x = trace.spectrum.data[f * n_bins + k];
                    buf[k] = Complex::new(g_mag[k] * x.re / a, g_mag[k] * x.im / a);
                }
            }
            self.ifft.process(&mut buf);
            let start = (f * self.cfg.hop_size) as isize - pad;
            for n in 0..n_fft {
                let w = self.window[n];
                if w == T::zero() {
                    continue;
                }
                let idx = reflect_index(start + n as isize, trace.input_len);
                grad_x[idx] += buf[n].re * w;
            }
        }
        grad_x
    }
}

/// Random training window of `seg_len` samples and its aligned mel.
/// Inputs shorter than `seg_len` are right-padded with zeros.
pub fn random_segment<T: Real, R: Rng + ?Sized>(
    x: &Waveform<T>,
    seg_len: usize,
    extractor: &MelExtractor<T>,
    rng: &mut R,
) -> Result<(Waveform<T>, MelSpectrogram<T>)> {
    if seg_len == 0 {
        return param_err("segment length must be positive");
    }
    let samples = if x.len() >= seg_len {
        let start = rng.gen_range(0..=x.len() - seg_len);
        x.samples[start..start + seg_len].to_vec()
    } else {
        let mut s = x.samples.clone();
        s.resize(seg_len, T::zero());
        s
    };
    let seg = Waveform::new(samples, x.sample_rate);
    let mel = extractor.mel_spectrogram(&seg)?;
    Ok((seg, mel))
}
