use avocodo_core::artifact::{
    alias_report, alias_report_with_amplitude, band_energy, downsample, folded_frequency, zero_stuff_upsample,
    DownsampleMethod, ResampleReport, FLOOR_DB,
};
use avocodo_core::Waveform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

const FS: u32 = 22050;

/// Full-length Hann periodogram (one-sided power per bin, arbitrary scale).
fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, v)| Complex::new(v * (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos()), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

fn energy_near(p: &[f64], bin: usize, half: usize) -> f64 {
    p[bin.saturating_sub(half)..(bin + half + 1).min(p.len())].iter().sum()
}

/// Folded-tone level relative to the source tone, both by periodogram peak
/// energy so the two are on the same scale.
fn folded_level_db(method: DownsampleMethod, f_tone: f64, factor: usize) -> f64 {
    let len = 44100;
    let x = Waveform::<f64>::sine(f_tone, 1.0, len, FS);
    let src = periodogram(&x.samples);
    let src_e = energy_near(&src, (f_tone * len as f64 / FS as f64).round() as usize, 3) / (len * len) as f64;
    let y = downsample(&x, method, factor).unwrap();
    // discard the filter transients; keep a whole stretch in the middle
    let inner = &y.samples[64..y.len() - 64];
    let out = periodogram(inner);
    let new_rate = FS as f64 / factor as f64;
    let fold = folded_frequency(f_tone, new_rate);
    let bin = (fold * inner.len() as f64 / new_rate).round() as usize;
    let out_e = energy_near(&out, bin, 3) / (inner.len() * inner.len()) as f64;
    10.0 * (out_e.max(1e-300) / src_e).log10()
}

fn check_ordering(f_tone: f64, factor: usize) {
    let es = folded_level_db(DownsampleMethod::EquallySpaced, f_tone, factor);
    let ap = folded_level_db(DownsampleMethod::AveragePool, f_tone, factor);
    let pq = folded_level_db(DownsampleMethod::Pqmf, f_tone, factor);
    assert!(es.abs() <= 6.0, "equally spaced {es:.1} dB");
    assert!(pq <= -60.0, "pqmf {pq:.1} dB");
    assert!(pq < ap && ap < es, "ordering {pq:.1} < {ap:.1} < {es:.1}");
}

#[test]
fn two_khz_tone_factor_eight_ordering() {
    check_ordering(2000.0, 8);
}

#[test]
fn two_khz_tone_factor_eleven_ordering() {
    check_ordering(2000.0, 11);
}

#[test]
fn normalized_tone_folds_to_mirror_frequency() {
    let len = 4096;
    let x: Vec<f64> = (0..len).map(|n| (std::f64::consts::TAU * 0.3 * n as f64).sin()).collect();
    let y = downsample(&Waveform::new(x, FS), DownsampleMethod::EquallySpaced, 2).unwrap();
    let p = periodogram(&y.samples);
    let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    // 0.6 cycles/sample at the new rate folds to 0.4 cycles/sample (0.8π rad)
    assert_eq!(peak, (0.4 * y.len() as f64).round() as usize);
}

#[test]
fn reports_follow_the_same_ordering() {
    let by = |r: &[ResampleReport], m| r.iter().find(|x| x.method == m).unwrap().alias_energy_db;
    let r11 = alias_report(1600.0, FS, 11).unwrap();
    let es = by(&r11, DownsampleMethod::EquallySpaced);
    assert!(es.abs() <= 10.0, "{es}");
    assert!(by(&r11, DownsampleMethod::Pqmf) <= -50.0);

    for f in [1400.0, 2000.0, 5000.0] {
        let r = alias_report(f, FS, 8).unwrap();
        let (es, ap, pq) = (
            by(&r, DownsampleMethod::EquallySpaced),
            by(&r, DownsampleMethod::AveragePool),
            by(&r, DownsampleMethod::Pqmf),
        );
        assert!(pq <= ap && ap <= es, "{f} Hz: {pq:.1} {ap:.1} {es:.1}");
        assert!(r.iter().all(|x| x.alias_energy_db.is_finite() && x.passband_distortion_db.is_finite()));
    }
    let silent = alias_report_with_amplitude(2000.0, FS, 8, 0.0).unwrap();
    assert!(silent.iter().all(|r| r.alias_energy_db <= FLOOR_DB && r.passband_distortion_db <= FLOOR_DB));
}

#[test]
fn zero_stuffing_images_match_baseband() {
    let x = Waveform::<f64>::sine(500.0, 1.0, 11025, 11025);
    let y = zero_stuff_upsample(&x, 2).unwrap();
    assert_eq!((y.len(), y.sample_rate), (22050, 22050));
    let p = periodogram(&y.samples);
    let base = energy_near(&p, 500, 3);
    let image = energy_near(&p, 10525, 3);
    assert!((10.0 * (base / image).log10()).abs() <= 0.1);
}

#[test]
fn zero_stuffed_noise_image_band_matches_baseband() {
    // noise band-limited to 0..2 kHz by summing random-phase DFT-grid cosines
    let len = 11025;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = vec![0.0; len];
    for k in 1..2000 {
        let (a, ph) = (rng.gen_range(0.2..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let w = std::f64::consts::TAU * k as f64 / len as f64;
        for (n, v) in x.iter_mut().enumerate() {
            *v += a * (w * n as f64 + ph).cos();
        }
    }
    let y = zero_stuff_upsample(&Waveform::new(x, 11025), 2).unwrap();
    let base = band_energy(&y, 0.0, 2000.0).unwrap();
    let image = band_energy(&y, 11025.0 - 2000.0, 11025.0).unwrap();
    assert!((base - image).abs() <= 0.5, "{base:.2} vs {image:.2}");
}

#[test]
fn band_energy_captures_tone_and_noise() {
    let tone = Waveform::<f64>::sine(1000.0, 1.0, 22050, FS);
    let total = band_energy(&tone, 0.0, 11025.0).unwrap();
    let inside = band_energy(&tone, 900.0, 1100.0).unwrap();
    let residual = 10.0 * (1.0 - 10f64.powf((inside - total) / 10.0)).max(1e-30).log10();
    assert!(residual <= -40.0, "{residual:.1} dB");
    assert!((total - 10.0 * 0.5f64.log10()).abs() < 0.1);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Waveform::new((0..22050).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(), FS);
    let mean_square = noise.samples.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let full = band_energy(&noise, 0.0, 11025.0).unwrap();
    assert!((full - 10.0 * mean_square.log10()).abs() <= 0.2);

    assert!(band_energy(&Waveform::<f64>::zeros(4096, FS), 0.0, 11025.0).unwrap() <= -120.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decimating_a_zero_stuffed_signal_is_identity(seed in any::<u64>(), len in 1usize..400, factor in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(), FS);
        let y = downsample(&zero_stuff_upsample(&x, factor).unwrap(), DownsampleMethod::EquallySpaced, factor).unwrap();
        prop_assert_eq!(y.samples, x.samples);
    }

    #[test]
    fn average_pool_returns_block_means(seed in any::<u64>(), blocks in 1usize..50, factor in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means: Vec<f64> = (0..blocks).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // a zero-mean, factor-periodic ripple on top of each block mean
        let ripple: Vec<f64> = (0..factor).map(|i| i as f64 - (factor - 1) as f64 / 2.0).collect();
        let x: Vec<f64> = (0..blocks * factor).map(|n| means[n / factor] + 0.01 * ripple[n % factor]).collect();
        let y = downsample(&Waveform::new(x, FS), DownsampleMethod::AveragePool, factor).unwrap();
        for (a, b) in y.samples.iter().zip(&means) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn ordering_holds_for_tones_above_nyquist(frac in 0.55f64..0.95, factor in prop::sample::select(vec![4usize, 8, 11])) {
        let new_rate = FS as f64 / factor as f64;
        // stay clear of the folded DC and Nyquist bins
        let f = new_rate * (1.0 + 0.8 * (frac - 0.5));
        let r = alias_report(f, FS, factor).unwrap();
        let get = |m| r.iter().find(|x| x.method == m).unwrap().alias_energy_db;
        prop_assert!(get(DownsampleMethod::Pqmf) <= get(DownsampleMethod::AveragePool) + 1e-9);
        prop_assert!(get(DownsampleMethod::AveragePool) <= get(DownsampleMethod::EquallySpaced) + 1e-9);
    }
}
