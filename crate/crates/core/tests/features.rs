use avocodo_core::features::{MelExtractor, StftConfig, LOG_FLOOR};
use avocodo_core::Waveform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: u32 = 22050;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

/// Log-mel of one frame by direct DFT and closed-form HTK triangles.
fn naive_log_mel(x: &[f64], frame: usize, cfg: &StftConfig, n_mels: usize, fs: f64) -> Vec<f64> {
    let n = cfg.fft_size;
    let pad = ((cfg.fft_size - cfg.hop_size) / 2) as isize;
    let start = (frame * cfg.hop_size) as isize - pad;
    let reflect = |i: isize| -> f64 {
        let len = x.len() as isize;
        let j = if i < 0 { -i } else if i >= len { 2 * (len - 1) - i } else { i };
        x[j as usize]
    };
    let seg: Vec<f64> = (0..n)
        .map(|t| {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * t as f64 / n as f64).cos();
            w * reflect(start + t as isize)
        })
        .collect();
    let mag: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in seg.iter().enumerate() {
                let a = -std::f64::consts::TAU * (k * t % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(fs / 2.0);
    (0..n_mels)
        .map(|m| {
            let lo = hz(top * m as f64 / (n_mels + 1) as f64);
            let c = hz(top * (m + 1) as f64 / (n_mels + 1) as f64);
            let hi = hz(top * (m + 2) as f64 / (n_mels + 1) as f64);
            let e: f64 = mag
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let f = k as f64 * fs / n as f64;
                    let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0);
                    w * a
                })
                .sum();
            e.max(LOG_FLOOR).ln()
        })
        .collect()
}

#[test]
fn standard_front_end_matches_direct_dft() {
    let ex = MelExtractor::<f64>::standard(FS).unwrap();
    let x = noise(8192, 3);
    let mel = ex.mel_spectrogram(&Waveform::new(x.clone(), FS)).unwrap();
    assert_eq!((mel.n_mels, mel.n_frames), (80, 32));
    for frame in [0, 1, 17, 31] {
        let want = naive_log_mel(&x, frame, ex.config(), 80, FS as f64);
        for (m, w) in want.iter().enumerate() {
            assert!((mel.get(m, frame) - w).abs() < 1e-8, "mel {m} frame {frame}");
        }
    }
}

#[test]
fn silence_hits_the_floor_everywhere() {
    let ex = MelExtractor::<f32>::standard(FS).unwrap();
    let mel = ex.mel_spectrogram(&Waveform::zeros(4096, FS)).unwrap();
    let floor = (LOG_FLOOR as f32).ln();
    assert!(mel.values.iter().all(|&v| v == floor));
}

/// Small front end so the finite-difference sweep stays cheap.
fn small() -> MelExtractor<f64> {
    MelExtractor::new(StftConfig { fft_size: 64, win_size: 64, hop_size: 16 }, FS, 8).unwrap()
}

#[test]
fn backward_matches_central_differences() {
    let ex = small();
    let x = noise(160, 21);
    let (mel, trace) = ex.mel_with_trace(&x).unwrap();
    let upstream = noise(mel.values.len(), 22);
    let loss = |s: &[f64]| -> f64 {
        let m = ex.mel_with_trace(s).unwrap().0;
        m.values.iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    let grad = ex.backward(&trace, &upstream);
    let eps = 1e-6;
    for i in 0..x.len() {
        let mut p = x.clone();
        p[i] += eps;
        let mut q = x.clone();
        q[i] -= eps;
        let fd = (loss(&p) - loss(&q)) / (2.0 * eps);
        let tol = 1e-5 * fd.abs().max(grad[i].abs()).max(1.0);
        assert!((fd - grad[i]).abs() <= tol, "sample {i}: analytic {} vs fd {fd}", grad[i]);
    }
}

#[test]
fn backward_is_zero_below_the_floor() {
    let ex = small();
    let x = vec![0.0; 128];
    let (mel, trace) = ex.mel_with_trace(&x).unwrap();
    let grad = ex.backward(&trace, &vec![1.0; mel.values.len()]);
    assert!(grad.iter().all(|&g| g == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_count_is_len_over_hop(frames in 1usize..64) {
        let cfg = StftConfig::default();
        prop_assert_eq!(cfg.n_frames(frames * 256), frames);
    }

    #[test]
    fn mel_is_finite_and_bounded_below(seed in any::<u64>(), len in 256usize..2048, gain in 0.0f64..4.0) {
        let ex = MelExtractor::<f64>::standard(FS).unwrap();
        let x: Vec<f64> = noise(len, seed).into_iter().map(|v| v * gain).collect();
        let mel = ex.mel_spectrogram(&Waveform::new(x, FS)).unwrap();
        let floor = LOG_FLOOR.ln();
        prop_assert!(mel.values.iter().all(|v| v.is_finite() && *v >= floor));
    }
}
