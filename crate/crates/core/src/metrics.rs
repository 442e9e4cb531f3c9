//! Objective evaluation: F0 RMSE, voicing error rates, mel-cepstral
//! distortion and spectrogram SSIM.
//!
//! None of these are tuned to reproduce published absolute values; they are
//! self-consistent measurements for comparing two renditions of a clip.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::features::{MelExtractor, MelSpectrogram};
use crate::scalar::Real;
use crate::waveform::Waveform;

pub const F0_MIN_HZ: f64 = 70.0;
pub const F0_MAX_HZ: f64 = 1000.0;
pub const F0_HOP: usize = 256;
pub const F0_WINDOW: usize = 512;
pub const VOICING_THRESHOLD: f64 = 0.3;
pub const MCD_ORDER: usize = 13;
pub const SSIM_WINDOW: usize = 7;

/// `(10 / ln 10) · √2`
pub fn mcd_constant() -> f64 {
    10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2
}

/// Framewise pitch; `0.0` marks an unvoiced frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    pub f0: Vec<f64>,
    pub confidence: Vec<f64>,
    pub hop: usize,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced(&self, i: usize) -> bool {
        self.f0[i] > 0.0
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.f0.iter().filter(|&&f| f > 0.0).count() as f64 / self.f0.len() as f64
    }
}

/// Normalized-autocorrelation pitch tracker.
///
/// Frame `i` correlates `x[i·hop ..][..512]` with its lagged copy for lags
/// covering 70–1000 Hz. The smallest-lag local maximum within 90 % of the
/// best correlation is refined parabolically; frames whose best correlation
/// falls below 0.3 are unvoiced.
pub fn extract_f0<T: Real>(x: &Waveform<T>) -> F0Track {
    let fs = x.sample_rate as f64;
    let lag_min = (fs / F0_MAX_HZ).floor().max(2.0) as usize;
    let lag_max = (fs / F0_MIN_HZ).ceil() as usize;
    let n_frames = (x.len() / F0_HOP).max(usize::from(!x.is_empty()));
    let need = F0_WINDOW + lag_max + 2;
    let sample = |i: usize| -> f64 { x.samples.get(i).map_or(0.0, |v| v.as_f64()) };

    let mut f0 = vec![0.0; n_frames];
    let mut confidence = vec![0.0; n_frames];
    let mut buf = vec![0.0; need];
    let mut nccf = vec![0.0; lag_max + 2];
    for frame in 0..n_frames {
        let start = frame * F0_HOP;
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = sample(start + j);
        }
        let head = &buf[..F0_WINDOW];
        let e0: f64 = head.iter().map(|v| v * v).sum();
        if e0 < 1e-10 * F0_WINDOW as f64 {
            continue;
        }
        // sliding energy of the lagged window
        let mut e_lag: f64 = buf[lag_min - 1..lag_min - 1 + F0_WINDOW].iter().map(|v| v * v).sum();
        for lag in lag_min - 1..=lag_max + 1 {
            if lag > lag_min - 1 {
                e_lag += buf[lag + F0_WINDOW - 1].powi(2) - buf[lag - 1].powi(2);
            }
            let cross: f64 = head.iter().zip(&buf[lag..lag + F0_WINDOW]).map(|(a, b)| a * b).sum();
            let denom = (e0 * e_lag.max(0.0)).sqrt();
            nccf[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
        }
        let best = (lag_min..=lag_max).map(|l| nccf[l]).fold(f64::MIN, f64::max);
        confidence[frame] = best.max(0.0);
        if best < VOICING_THRESHOLD {
            continue;
        }
        let pick = (lag_min..=lag_max)
            .find(|&l| nccf[l] >= 0.9 * best && nccf[l] >= nccf[l - 1] && nccf[l] >= nccf[l + 1]);
        let Some(lag) = pick else { continue };
        let (a, b, c) = (nccf[lag - 1], nccf[lag], nccf[lag + 1]);
        let curv = a - 2.0 * b + c;
        let delta = if curv < 0.0 { (0.5 * (a - c) / curv).clamp(-0.5, 0.5) } else { 0.0 };
        let hz = fs / (lag as f64 + delta);
        if (F0_MIN_HZ..=F0_MAX_HZ).contains(&hz) {
            f0[frame] = hz;
        }
    }
    F0Track { f0, confidence, hop: F0_HOP }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F0Rmse {
    pub rmse_hz: f64,
    pub co_voiced_frames: usize,
    /// No frame is voiced in both tracks; `rmse_hz` is then 0.
    pub empty_overlap: bool,
}

pub fn f0_rmse(reference: &F0Track, estimate: &F0Track) -> Result<F0Rmse> {
    if reference.len() != estimate.len() {
        return param_err(format!("track lengths differ: {} vs {}", reference.len(), estimate.len()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, b) in reference.f0.iter().zip(&estimate.f0) {
        if *a > 0.0 && *b > 0.0 {
            sum += (a - b).powi(2);
            count += 1;
        }
    }
    Ok(F0Rmse {
        rmse_hz: if count > 0 { (sum / count as f64).sqrt() } else { 0.0 },
        co_voiced_frames: count,
        empty_overlap: count == 0,
    })
}

/// Voicing decision errors in percent. A rate whose conditioning class is
/// empty is reported as 0 with its `*_defined` flag cleared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VuvRates {
    pub fpr: f64,
    pub fnr: f64,
    pub fpr_defined: bool,
    pub fnr_defined: bool,
}

pub fn vuv_rates(reference: &F0Track, estimate: &F0Track) -> Result<VuvRates> {
    if reference.len() != estimate.len() {
        return param_err(format!("track lengths differ: {} vs {}", reference.len(), estimate.len()));
    }
    let (mut fp, mut neg, mut fneg, mut pos) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..reference.len() {
        match (reference.voiced(i), estimate.voiced(i)) {
            (false, est) => {
                neg += 1;
                fp += usize::from(est);
            }
            (true, est) => {
                pos += 1;
                fneg += usize::from(!est);
            }
        }
    }
    let pct = |a: usize, b: usize| if b > 0 { 100.0 * a as f64 / b as f64 } else { 0.0 };
    Ok(VuvRates { fpr: pct(fp, neg), fnr: pct(fneg, pos), fpr_defined: neg > 0, fnr_defined: pos > 0 })
}

/// Orthonormal DCT-II of each log-mel frame, keeping `c₁ … c₁₃`.
pub fn mel_cepstrum<T: Real>(mel: &MelSpectrogram<T>) -> Vec<[f64; MCD_ORDER]> {
    let m = mel.n_mels as f64;
    let scale = (2.0 / m).sqrt();
    let basis: Vec<Vec<f64>> = (1..=MCD_ORDER)
        .map(|q| {
            (0..mel.n_mels)
                .map(|i| scale * (std::f64::consts::PI * q as f64 * (i as f64 + 0.5) / m).cos())
                .collect()
        })
        .collect();
    (0..mel.n_frames)
        .map(|f| {
            let mut c = [0.0; MCD_ORDER];
            for (q, row) in basis.iter().enumerate() {
                c[q] = row.iter().enumerate().map(|(i, b)| b * mel.get(i, f).as_f64()).sum();
            }
            c
        })
        .collect()
}

/// Mean framewise cepstral distance in dB.
pub fn mcd_from_cepstra(a: &[[f64; MCD_ORDER]], b: &[[f64; MCD_ORDER]]) -> Result<f64> {
    if a.len() != b.len() {
        return param_err(format!("frame counts differ: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return param_err("no frames to compare");
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(mcd_constant() * total / a.len() as f64)
}

pub fn mcd<T: Real>(x: &Waveform<T>, y: &Waveform<T>) -> Result<f64> {
    if x.len() != y.len() {
        return param_err(format!("waveform lengths differ: {} vs {}", x.len(), y.len()));
    }
    let ex = MelExtractor::<T>::standard(x.sample_rate)?;
    let cx = mel_cepstrum(&ex.mel_spectrogram(x)?);
    let cy = mel_cepstrum(&ex.mel_spectrogram(y)?);
    mcd_from_cepstra(&cx, &cy)
}

/// Mean SSIM over all `7×7` windows of two equally shaped rasters
/// (`rows × cols`, row-major). Constants use the joint dynamic range.
pub fn ssim_raster(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols || a.is_empty() {
        return param_err("rasters must be non-empty and share a shape");
    }
    let hi = a.iter().chain(b).copied().fold(f64::MIN, f64::max);
    let lo = a.iter().chain(b).copied().fold(f64::MAX, f64::min);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let wr = SSIM_WINDOW.min(rows);
    let wc = SSIM_WINDOW.min(cols);
    let n = (wr * wc) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=rows - wr {
        for c0 in 0..=cols - wc {
            let (mut sa, mut sb) = (0.0, 0.0);
            for r in r0..r0 + wr {
                for c in c0..c0 + wc {
                    sa += a[r * cols + c];
                    sb += b[r * cols + c];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for r in r0..r0 + wr {
                for c in c0..c0 + wc {
                    let da = a[r * cols + c] - ma;
                    let db = b[r * cols + c] - mb;
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            }
            let dof = if n > 1.0 { n - 1.0 } else { 1.0 };
            let (vaa, vbb, vab) = (vaa / dof, vbb / dof, vab / dof);
            total += ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM between the log-mel spectrograms of two equal-length waveforms.
pub fn spec_ssim<T: Real>(x: &Waveform<T>, y: &Waveform<T>) -> Result<f64> {
    if x.len() != y.len() {
        return param_err(format!("waveform lengths differ: {} vs {}", x.len(), y.len()));
    }
    let ex = MelExtractor::<T>::standard(x.sample_rate)?;
    let mx = ex.mel_spectrogram(x)?;
    let my = ex.mel_spectrogram(y)?;
    let a: Vec<f64> = mx.values.iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = my.values.iter().map(|v| v.as_f64()).collect();
    ssim_raster(&a, &b, mx.n_mels, mx.n_frames)
}

/// All metrics for one reference/degraded pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub f0_rmse: f64,
    pub f0_empty_overlap: bool,
    pub vuv_fpr: f64,
    pub vuv_fnr: f64,
    pub mcd: f64,
    pub ssim: f64,
}

/// Evaluates a pair after truncating both to their common length.
pub fn evaluate_pair<T: Real>(reference: &Waveform<T>, degraded: &Waveform<T>) -> Result<PairMetrics> {
    if reference.sample_rate != degraded.sample_rate {
        return param_err("sample rates differ");
    }
    let len = reference.len().min(degraded.len());
    let r = Waveform::new(reference.samples[..len].to_vec(), reference.sample_rate);
    let d = Waveform::new(degraded.samples[..len].to_vec(), degraded.sample_rate);
    let (fr, fd) = (extract_f0(&r), extract_f0(&d));
    let rmse = f0_rmse(&fr, &fd)?;
    let vuv = vuv_rates(&fr, &fd)?;
    Ok(PairMetrics {
        f0_rmse: rmse.rmse_hz,
        f0_empty_overlap: rmse.empty_overlap,
        vuv_fpr: vuv.fpr,
        vuv_fnr: vuv.fnr,
        mcd: mcd(&r, &d)?,
        ssim: spec_ssim(&r, &d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(f0: Vec<f64>) -> F0Track {
        let n = f0.len();
        F0Track { f0, confidence: vec![1.0; n], hop: F0_HOP }
    }

    #[test]
    fn pure_tone_is_tracked() {
        let x = Waveform::<f64>::sine(220.0, 0.5, 22050, 22050);
        let t = extract_f0(&x);
        assert!(t.voiced_fraction() > 0.9);
        for &f in t.f0.iter().filter(|&&f| f > 0.0) {
            assert!((f - 220.0).abs() <= 2.0, "{f}");
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let t = extract_f0(&Waveform::<f32>::zeros(8192, 22050));
        assert_eq!(t.len(), 32);
        assert_eq!(t.voiced_fraction(), 0.0);
    }

    #[test]
    fn identical_tracks() {
        let a = track(vec![0.0, 100.0, 120.0, 0.0]);
        let r = f0_rmse(&a, &a).unwrap();
        assert_eq!(r.rmse_hz, 0.0);
        assert_eq!(r.co_voiced_frames, 2);
        assert_eq!(vuv_rates(&a, &a).unwrap(), VuvRates { fpr: 0.0, fnr: 0.0, fpr_defined: true, fnr_defined: true });
    }

    #[test]
    fn disjoint_voicing_flags_empty_overlap() {
        let a = track(vec![100.0, 0.0]);
        let b = track(vec![0.0, 100.0]);
        let r = f0_rmse(&a, &b).unwrap();
        assert!(r.empty_overlap);
        assert_eq!(r.rmse_hz, 0.0);
        assert!(f0_rmse(&a, &track(vec![1.0])).is_err());
    }

    #[test]
    fn all_voiced_estimate_against_silent_reference() {
        let r = vuv_rates(&track(vec![0.0; 5]), &track(vec![150.0; 5])).unwrap();
        assert_eq!(r.fpr, 100.0);
        assert_eq!(r.fnr, 0.0);
        assert!(!r.fnr_defined);
    }

    #[test]
    fn cepstral_offset_closed_form() {
        let base: Vec<[f64; MCD_ORDER]> = (0..10).map(|i| [i as f64 * 0.1; MCD_ORDER]).collect();
        let mut shifted = base.clone();
        for c in shifted.iter_mut() {
            c[4] += 0.7;
        }
        let d = mcd_from_cepstra(&base, &shifted).unwrap();
        assert!((d - mcd_constant() * 0.7).abs() < 1e-12);
        assert_eq!(mcd_from_cepstra(&base, &base).unwrap(), 0.0);
    }

    #[test]
    fn ssim_identity_and_negation() {
        let a: Vec<f64> = (0..80 * 12).map(|i| ((i * 37) % 101) as f64 / 10.0 - 5.0).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((ssim_raster(&a, &a, 80, 12).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim_raster(&a, &neg, 80, 12).unwrap() < 1.0);
        assert!(ssim_raster(&a, &neg, 80, 11).is_err());
    }
}
