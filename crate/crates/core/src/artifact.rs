//! Tools that reproduce the aliasing and imaging demonstrations: naive and
//! filtered decimation, zero-insertion expansion and spectral energy
//! measurements.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::filterbank::{PqmfBank, PrototypeSpec};
use crate::scalar::Real;
use crate::waveform::Waveform;

/// Reported in place of `-∞` for silent measurements.
pub const FLOOR_DB: f64 = -200.0;

pub const WELCH_SEGMENT: usize = 1024;
pub const WELCH_HOP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleMethod {
    EquallySpaced,
    AveragePool,
    Pqmf,
}

impl DownsampleMethod {
    pub const ALL: [DownsampleMethod; 3] = [Self::EquallySpaced, Self::AveragePool, Self::Pqmf];
}

impl fmt::Display for DownsampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EquallySpaced => "equally_spaced",
            Self::AveragePool => "average_pool",
            Self::Pqmf => "pqmf",
        })
    }
}

impl FromStr for DownsampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esds" | "equally_spaced" => Ok(Self::EquallySpaced),
            "avgpool" | "average_pool" => Ok(Self::AveragePool),
            "pqmf" => Ok(Self::Pqmf),
            other => param_err(format!("unknown downsampling method {other:?}")),
        }
    }
}

pub fn downsample<T: Real>(x: &Waveform<T>, method: DownsampleMethod, factor: usize) -> Result<Waveform<T>> {
    if factor < 2 {
        return param_err(format!("downsampling factor must be at least 2, got {factor}"));
    }
    if x.len() < factor {
        return param_err(format!("{} samples cannot be decimated by {factor}", x.len()));
    }
    let rate = x.sample_rate / factor as u32;
    let out_len = x.len() / factor;
    match method {
        DownsampleMethod::EquallySpaced => {
            Ok(Waveform::new((0..out_len).map(|n| x.samples[n * factor]).collect(), rate))
        }
        DownsampleMethod::AveragePool => {
            let inv = T::lit(1.0 / factor as f64);
            let samples = x.samples.chunks_exact(factor).map(|c| c.iter().copied().sum::<T>() * inv).collect();
            Ok(Waveform::new(samples, rate))
        }
        DownsampleMethod::Pqmf => {
            let bank = PqmfBank::<T>::with_default_spec(factor)?;
            bank.lowpass_downsample(x)
        }
    }
}

/// Expansion by zero insertion: `y[n·factor] = x[n]`, zeros elsewhere.
pub fn zero_stuff_upsample<T: Real>(x: &Waveform<T>, factor: usize) -> Result<Waveform<T>> {
    if factor < 2 {
        return param_err(format!("upsampling factor must be at least 2, got {factor}"));
    }
    let mut y = vec![T::zero(); x.len() * factor];
    for (n, &v) in x.samples.iter().enumerate() {
        y[n * factor] = v;
    }
    Ok(Waveform::new(y, x.sample_rate * factor as u32))
}

fn to_db(power: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// One-sided Welch power spectrum (Hann, 1024/256), scaled so the bins sum
/// to the mean-square value of the signal. Returns `(bin_hz, power)`.
pub fn welch_psd<T: Real>(x: &Waveform<T>) -> Result<(f64, Vec<f64>)> {
    if x.is_empty() {
        return param_err("cannot estimate the spectrum of an empty signal");
    }
    let seg = WELCH_SEGMENT.min(x.len());
    let hop = WELCH_HOP.min(seg);
    let window: Vec<f64> = (0..seg).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / seg as f64).cos()).collect();
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= x.len() {
        for n in 0..seg {
            buf[n] = Complex::new(x.samples[start + n].as_f64() * window[n], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            let two_sided = if k == 0 || (seg % 2 == 0 && k == seg / 2) { 1.0 } else { 2.0 };
            acc[k] += two_sided * buf[k].norm_sqr() / (seg as f64 * win_energy);
        }
        count += 1;
        start += hop;
    }
    acc.iter_mut().for_each(|v| *v /= count as f64);
    Ok((x.sample_rate as f64 / seg as f64, acc))
}

/// Welch energy inside `[f_lo, f_hi]` Hz, in dB (mean-square units).
pub fn band_energy<T: Real>(x: &Waveform<T>, f_lo: f64, f_hi: f64) -> Result<f64> {
    let nyquist = x.sample_rate as f64 / 2.0;
    if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= nyquist) {
        return param_err(format!("band {f_lo}..{f_hi} Hz outside 0..{nyquist} Hz"));
    }
    let (bin_hz, psd) = welch_psd(x)?;
    let power = psd
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * bin_hz;
            f >= f_lo && f <= f_hi
        })
        .map(|(_, p)| p)
        .sum();
    Ok(to_db(power))
}

/// Amplitude of the component at `freq` Hz, in dB re amplitude 1, from a
/// Hann-weighted single-frequency DFT over `x[skip .. len − skip]`.
pub fn tone_level_db<T: Real>(x: &Waveform<T>, freq: f64, skip: usize) -> f64 {
    if x.len() <= 2 * skip + 1 {
        return FLOOR_DB;
    }
    let seg = &x.samples[skip..x.len() - skip];
    let n = seg.len();
    let w = 2.0 * PI * freq / x.sample_rate as f64;
    let (mut re, mut im, mut wsum) = (0.0, 0.0, 0.0);
    for (i, v) in seg.iter().enumerate() {
        let win = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        let v = v.as_f64() * win;
        re += v * (w * i as f64).cos();
        im -= v * (w * i as f64).sin();
        wsum += win;
    }
    let amp = 2.0 * (re * re + im * im).sqrt() / wsum;
    to_db(amp * amp)
}

/// Frequency a tone lands on after decimation to `new_rate`.
pub fn folded_frequency(f: f64, new_rate: f64) -> f64 {
    let r = f.rem_euclid(new_rate);
    r.min(new_rate - r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub method: DownsampleMethod,
    pub factor: usize,
    /// Level of the folded tone after decimation, dB re amplitude 1.
    pub alias_energy_db: f64,
    /// Gain error for an in-band probe tone, dB (signed).
    pub passband_distortion_db: f64,
}

/// Decimates a unit-amplitude tone above the post-decimation Nyquist with
/// every method and reports where its energy lands.
pub fn alias_report(f_tone: f64, f_s: u32, factor: usize) -> Result<Vec<ResampleReport>> {
    alias_report_with_amplitude(f_tone, f_s, factor, 1.0)
}

pub fn alias_report_with_amplitude(
    f_tone: f64,
    f_s: u32,
    factor: usize,
    amplitude: f64,
) -> Result<Vec<ResampleReport>> {
    if factor < 2 {
        return param_err(format!("factor must be at least 2, got {factor}"));
    }
    let fs = f_s as f64;
    let new_rate = fs / factor as f64;
    if !(f_tone > new_rate / 2.0 && f_tone < fs / 2.0) {
        return param_err(format!(
            "tone {f_tone} Hz must lie between the decimated Nyquist {} Hz and {} Hz",
            new_rate / 2.0,
            fs / 2.0
        ));
    }
    let len = f_s as usize;
    let tone = Waveform::<f64>::sine(f_tone, amplitude, len, f_s);
    let probe_hz = new_rate / 8.0;
    let probe = Waveform::<f64>::sine(probe_hz, amplitude, len, f_s);
    let fold = folded_frequency(f_tone, new_rate);
    // drop the filter start-up region at both ends
    let filter_len = PrototypeSpec::default_for(factor)?.taps + 1;
    let skip = filter_len.div_ceil(factor) + 1;
    let probe_in = tone_level_db(&probe, probe_hz, skip * factor);

    DownsampleMethod::ALL
        .iter()
        .map(|&method| {
            let alias = downsample(&tone, method, factor)?;
            let passed = downsample(&probe, method, factor)?;
            let probe_out = tone_level_db(&passed, probe_hz, skip);
            let passband_distortion_db = if probe_in <= FLOOR_DB { FLOOR_DB } else { probe_out - probe_in };
            Ok(ResampleReport {
                method,
                factor,
                alias_energy_db: tone_level_db(&alias, fold, skip),
                passband_distortion_db,
            })
        })
        .collect()
}
