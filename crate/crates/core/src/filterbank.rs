//! Pseudo-QMF analysis/synthesis banks.
//!
//! A single Kaiser-windowed lowpass prototype `h` is cosine-modulated into
//! `N` analysis and `N` synthesis filters. Analysis convolves with filter
//! `k` and keeps every `N`-th sample; synthesis zero-stuffs each band,
//! convolves with the matching synthesis filter, sums and restores the
//! gain `N`. Both stages pad `taps/2` zeros on each side so that the
//! sub-bands and the reconstruction stay time-aligned with the input.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::scalar::Real;
use crate::waveform::Waveform;

/// Kaiser-windowed lowpass prototype parameters.
///
/// `taps` is the filter order (the filter has `taps + 1` coefficients) and
/// `cutoff_ratio` is the cutoff as a fraction of the Nyquist frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSpec {
    pub taps: usize,
    pub cutoff_ratio: f64,
    pub beta: f64,
}

impl PrototypeSpec {
    pub fn new(taps: usize, cutoff_ratio: f64, beta: f64) -> Result<Self> {
        let spec = Self { taps, cutoff_ratio, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return param_err("prototype taps must be positive");
        }
        if !(self.cutoff_ratio > 0.0 && self.cutoff_ratio < 0.5) {
            return param_err(format!("cutoff ratio {} outside (0, 0.5)", self.cutoff_ratio));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return param_err(format!("kaiser beta {} must be finite and non-negative", self.beta));
        }
        Ok(())
    }

    /// Published settings for the band counts used by the discriminators.
    pub fn for_bands(n_bands: usize) -> Option<Self> {
        let (taps, cutoff_ratio, beta) = match n_bands {
            2 => (256, 0.25, 10.0),
            4 => (192, 0.13, 10.0),
            16 => (256, 0.03, 10.0),
            64 => (256, 0.1, 9.0),
            _ => return None,
        };
        Some(Self { taps, cutoff_ratio, beta })
    }

    /// Keeps `taps` and `beta` and solves for the cutoff at which the unit-DC
    /// prototype satisfies `|H(π/2N)|² = 1/2`, the power-complementary
    /// crossover condition of a cosine-modulated bank.
    pub fn tuned(n_bands: usize, taps: usize, beta: f64) -> Result<Self> {
        if n_bands < 2 {
            return param_err("a filter bank needs at least two bands");
        }
        let probe = PI / (2.0 * n_bands as f64);
        let crossover = |r: f64| -> f64 {
            let h = windowed_sinc(taps, r, beta);
            let dc: f64 = h.iter().sum();
            let centre = taps as f64 / 2.0;
            let resp: f64 =
                h.iter().enumerate().map(|(n, v)| v * (probe * (n as f64 - centre)).cos()).sum::<f64>() / dc;
            resp * resp - 0.5
        };
        let mut lo = 0.25 / n_bands as f64;
        let mut hi = (1.0 / n_bands as f64).min(0.499);
        let (f_lo, f_hi) = (crossover(lo), crossover(hi));
        if !(f_lo < 0.0 && f_hi > 0.0) {
            return param_err(format!(
                "cannot bracket a power-complementary cutoff for {n_bands} bands with {taps} taps"
            ));
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if crossover(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::new(taps, 0.5 * (lo + hi), beta)
    }

    /// Near-perfect-reconstruction design for `n_bands`: the published taps
    /// and beta (256 and 10 otherwise), at least `12·N` taps so the
    /// transition band stays narrower than the band spacing, and a tuned
    /// cutoff.
    pub fn reconstruction(n_bands: usize) -> Result<Self> {
        let (taps, beta) = Self::for_bands(n_bands).map_or((256, 10.0), |s| (s.taps, s.beta));
        Self::tuned(n_bands, taps.max(12 * n_bands), beta)
    }

    /// Published settings where they exist, otherwise a tuned 256-tap design.
    pub fn default_for(n_bands: usize) -> Result<Self> {
        match Self::for_bands(n_bands) {
            Some(spec) => Ok(spec),
            None => Self::tuned(n_bands, 256, 10.0),
        }
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Symmetric Kaiser window of `len` points.
pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn windowed_sinc(taps: usize, cutoff_ratio: f64, beta: f64) -> Vec<f64> {
    let wc = PI * cutoff_ratio;
    let centre = taps as f64 / 2.0;
    let window = kaiser_window(taps + 1, beta);
    (0..=taps)
        .map(|n| {
            let m = n as f64 - centre;
            let ideal = if m.abs() < 1e-12 { cutoff_ratio } else { (wc * m).sin() / (PI * m) };
            ideal * window[n]
        })
        .collect()
}

/// Designed prototype plus its gain before normalization.
#[derive(Clone, Debug)]
pub struct Prototype<T> {
    pub coeffs: Vec<T>,
    /// DC gain of the raw windowed sinc; the returned coefficients have DC gain 1.
    pub raw_dc_gain: f64,
}

pub fn design_prototype<T: Real>(spec: &PrototypeSpec) -> Result<Prototype<T>> {
    spec.validate()?;
    let h = windowed_sinc(spec.taps, spec.cutoff_ratio, spec.beta);
    let raw_dc_gain: f64 = h.iter().sum();
    if !(raw_dc_gain.is_finite() && raw_dc_gain > 0.0) {
        return param_err("prototype has no passband gain");
    }
    let coeffs = h.iter().map(|v| T::lit(v / raw_dc_gain)).collect();
    Ok(Prototype { coeffs, raw_dc_gain })
}

/// Sub-band decomposition, band-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSignals<T> {
    pub n_bands: usize,
    pub length_per_band: usize,
    /// `n_bands × length_per_band`, one band after another.
    pub data: Vec<T>,
    /// Rate of the full-band signal the bands were taken from.
    pub source_rate: u32,
}

impl<T: Real> SubbandSignals<T> {
    pub fn band(&self, k: usize) -> &[T] {
        &self.data[k * self.length_per_band..(k + 1) * self.length_per_band]
    }

    pub fn band_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.length_per_band..(k + 1) * self.length_per_band]
    }

    pub fn sample_rate_per_band(&self) -> f64 {
        self.source_rate as f64 / self.n_bands as f64
    }

    pub fn zeros(n_bands: usize, length_per_band: usize, source_rate: u32) -> Self {
        Self { n_bands, length_per_band, data: vec![T::zero(); n_bands * length_per_band], source_rate }
    }
}

#[derive(Clone, Debug)]
pub struct PqmfBank<T> {
    n_bands: usize,
    spec: PrototypeSpec,
    prototype: Vec<T>,
    raw_dc_gain: f64,
    analysis: Vec<Vec<T>>,
    synthesis: Vec<Vec<T>>,
}

/// Builds the cosine-modulated bank. Any `n_bands ≥ 2` is accepted; the
/// discriminators use 2, 4, 16 and 64, the artifact tools also 8 and 11.
pub fn build_bank<T: Real>(n_bands: usize, spec: &PrototypeSpec) -> Result<PqmfBank<T>> {
    if n_bands < 2 {
        return param_err(format!("a filter bank needs at least two bands, got {n_bands}"));
    }
    let proto = design_prototype::<f64>(spec)?;
    let len = spec.taps + 1;
    let centre = spec.taps as f64 / 2.0;
    let modulated = |k: usize, sign: f64| -> Vec<T> {
        let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
        let w = PI / n_bands as f64 * (k as f64 + 0.5);
        (0..len)
            .map(|n| T::lit(2.0 * proto.coeffs[n] * (w * (n as f64 - centre) + sign * phase).cos()))
            .collect()
    };
    let analysis = (0..n_bands).map(|k| modulated(k, 1.0)).collect();
    let synthesis = (0..n_bands).map(|k| modulated(k, -1.0)).collect();
    Ok(PqmfBank {
        n_bands,
        spec: *spec,
        prototype: proto.coeffs.iter().map(|&v| T::lit(v)).collect(),
        raw_dc_gain: proto.raw_dc_gain,
        analysis,
        synthesis,
    })
}

impl<T: Real> PqmfBank<T> {
    /// Bank with the published (or tuned fallback) prototype for `n_bands`.
    pub fn with_default_spec(n_bands: usize) -> Result<Self> {
        build_bank(n_bands, &PrototypeSpec::default_for(n_bands)?)
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn spec(&self) -> &PrototypeSpec {
        &self.spec
    }

    pub fn taps(&self) -> usize {
        self.spec.taps
    }

    pub fn filter_len(&self) -> usize {
        self.spec.taps + 1
    }

    /// Delay of the raw analysis→synthesis filter cascade, in samples.
    /// `analyze`/`synthesize` compensate it with centred padding.
    pub fn group_delay(&self) -> usize {
        self.spec.taps
    }

    pub fn raw_dc_gain(&self) -> f64 {
        self.raw_dc_gain
    }

    pub fn prototype(&self) -> &[T] {
        &self.prototype
    }

    pub fn analysis_filter(&self, k: usize) -> &[T] {
        &self.analysis[k]
    }

    pub fn synthesis_filter(&self, k: usize) -> &[T] {
        &self.synthesis[k]
    }

    /// Left padding used by the centred convolutions.
    pub fn pad(&self) -> usize {
        self.spec.taps / 2
    }

    pub fn analyze(&self, x: &Waveform<T>) -> Result<SubbandSignals<T>> {
        if x.is_empty() {
            return param_err("cannot analyze an empty waveform");
        }
        let n = self.n_bands;
        let out_len = x.len() / n;
        if out_len == 0 {
            return param_err(format!("waveform of {} samples is shorter than {n} bands", x.len()));
        }
        let mut out = SubbandSignals::zeros(n, out_len, x.sample_rate);
        for k in 0..n {
            let filt = &self.analysis[k];
            let band = out.band_mut(k);
            for (m, slot) in band.iter_mut().enumerate() {
                *slot = centred_tap_sum(&x.samples, filt, m * n, self.pad());
            }
        }
        Ok(out)
    }

    pub fn synthesize(&self, bands: &SubbandSignals<T>) -> Result<Waveform<T>> {
        if bands.n_bands != self.n_bands {
            return param_err(format!("bank has {} bands, input has {}", self.n_bands, bands.n_bands));
        }
        let n = self.n_bands;
        let len = bands.length_per_band * n;
        let gain = T::lit(n as f64);
        let pad = self.pad() as isize;
        let mut y = vec![T::zero(); len];
        for k in 0..n {
            let filt = &self.synthesis[k];
            let band = bands.band(k);
            // u[m n] = gain · b[m]; y[t] = Σ_j s[j] u[t + pad − j]
            for (m, &b) in band.iter().enumerate() {
                if b == T::zero() {
                    continue;
                }
                let v = b * gain;
                let src = (m * n) as isize;
                for (j, &s) in filt.iter().enumerate() {
                    let t = src - pad + j as isize;
                    if t >= 0 && (t as usize) < len {
                        y[t as usize] += s * v;
                    }
                }
            }
        }
        Ok(Waveform::new(y, bands.source_rate))
    }

    /// First (lowest-frequency) band only; the anti-aliased `N`× decimation.
    pub fn lowpass_downsample(&self, x: &Waveform<T>) -> Result<Waveform<T>> {
        if x.is_empty() {
            return param_err("cannot downsample an empty waveform");
        }
        let n = self.n_bands;
        let out_len = x.len() / n;
        if out_len == 0 {
            return param_err(format!("waveform of {} samples is shorter than {n} bands", x.len()));
        }
        let filt = &self.analysis[0];
        let samples = (0..out_len).map(|m| centred_tap_sum(&x.samples, filt, m * n, self.pad())).collect();
        Ok(Waveform::new(samples, x.sample_rate / n as u32))
    }
}

/// `Σ_j f[j] · x[t + pad − j]` with zeros outside `x`.
#[inline]
fn centred_tap_sum<T: Real>(x: &[T], filt: &[T], t: usize, pad: usize) -> T {
    let base = t as isize + pad as isize;
    let len = x.len() as isize;
    // j ranges so that 0 ≤ base − j < len
    let j_lo = (base - len + 1).max(0) as usize;
    let j_hi = (base.min(filt.len() as isize - 1)) as isize;
    let mut acc = T::zero();
    if j_hi < j_lo as isize {
        return acc;
    }
    for j in j_lo..=j_hi as usize {
        acc += filt[j] * x[(base - j as isize) as usize];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response_db(h: &[f64], f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in h.iter().enumerate() {
            let a = -2.0 * PI * f * n as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        10.0 * (re * re + im * im).log10()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PrototypeSpec::new(0, 0.1, 1.0).is_err());
        assert!(PrototypeSpec::new(8, 0.0, 1.0).is_err());
        assert!(PrototypeSpec::new(8, 0.5, 1.0).is_err());
        assert!(PrototypeSpec::new(8, 0.2, -1.0).is_err());
        assert!(build_bank::<f64>(1, &PrototypeSpec::for_bands(2).unwrap()).is_err());
    }

    #[test]
    fn rectangular_window_prototype() {
        let p = design_prototype::<f64>(&PrototypeSpec::new(4, 0.25, 0.0).unwrap()).unwrap();
        let h = &p.coeffs;
        assert_eq!(h.len(), 5);
        for i in 0..5 {
            assert!((h[i] - h[4 - i]).abs() < 1e-15);
        }
        assert!(h.iter().all(|&v| v <= h[2]));
        // beta = 0 keeps the raw sinc, whose centre tap equals the cutoff ratio
        assert!((h[2] * p.raw_dc_gain - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kaiser_window_endpoints() {
        let w = kaiser_window(9, 10.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[0] - 1.0 / bessel_i0(10.0)).abs() < 1e-15);
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) reference value
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }

    #[test]
    fn two_band_filters_mirror_each_other() {
        let spec = PrototypeSpec::new(256, 0.25, 10.0).unwrap();
        let bank = build_bank::<f64>(2, &spec).unwrap();
        let lin = |db: f64| 10f64.powf(db / 20.0);
        for i in 0..=200 {
            let f = 0.5 * i as f64 / 200.0;
            let h0 = lin(response_db(bank.analysis_filter(0), f));
            let h1 = lin(response_db(bank.analysis_filter(1), 0.5 - f));
            assert!((h0 - h1).abs() < 1e-6, "f={f}: {h0} vs {h1}");
        }
    }

    #[test]
    fn tuned_cutoffs_sit_near_published_values() {
        for (n, taps, beta) in [(2, 256, 10.0), (4, 192, 10.0), (16, 256, 10.0)] {
            let tuned = PrototypeSpec::tuned(n, taps, beta).unwrap();
            let published = PrototypeSpec::for_bands(n).unwrap();
            assert!((tuned.cutoff_ratio - published.cutoff_ratio).abs() < 0.006, "{n}: {tuned:?}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let bank = PqmfBank::<f64>::with_default_spec(4).unwrap();
        let sb = bank.analyze(&Waveform::zeros(512, 22050)).unwrap();
        assert!(sb.data.iter().all(|&v| v == 0.0));
        assert_eq!(sb.length_per_band, 128);
        let y = bank.synthesize(&sb).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
        assert!(bank.analyze(&Waveform::zeros(0, 22050)).is_err());
    }

    #[test]
    fn band_count_mismatch_is_rejected() {
        let bank = PqmfBank::<f64>::with_default_spec(4).unwrap();
        let sb = SubbandSignals::<f64>::zeros(2, 16, 22050);
        assert!(bank.synthesize(&sb).is_err());
    }

    #[test]
    fn truncates_to_whole_decimated_frames() {
        let bank = PqmfBank::<f64>::with_default_spec(4).unwrap();
        let sb = bank.analyze(&Waveform::sine(100.0, 1.0, 1027, 22050)).unwrap();
        assert_eq!(sb.length_per_band, 256);
        assert_eq!(sb.sample_rate_per_band(), 22050.0 / 4.0);
    }
}
