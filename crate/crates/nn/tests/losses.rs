use std::sync::Arc;

use avocodo_core::{MelExtractor, StftConfig, Waveform};
use avocodo_nn::disc::DiscriminatorOutput;
use avocodo_nn::losses::{self, AdversarialTerms, BranchPair, LossWeights};
use avocodo_nn::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair(real_score: Vec<f64>, fake_score: Vec<f64>, real_f: Vec<Vec<f64>>, fake_f: Vec<Vec<f64>>) -> BranchPair<Vec<f64>> {
    BranchPair {
        real: DiscriminatorOutput { score: real_score, features: real_f },
        fake: DiscriminatorOutput { score: fake_score, features: fake_f },
    }
}

fn random_terms(seed: u64) -> AdversarialTerms<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let mut branch = || pair(v(7), v(7), vec![v(5), v(3)], vec![v(5), v(3)]);
    AdversarialTerms {
        combd: (0..3).map(|_| branch()).collect(),
        combd_decimated: (0..2).map(|_| branch()).collect(),
        sbd: (0..4).map(|_| branch()).collect(),
    }
}

fn optimal_terms() -> AdversarialTerms<Vec<f64>> {
    let f = vec![vec![0.3, -0.2], vec![1.5]];
    let branch = || pair(vec![1.0; 4], vec![0.0; 4], f.clone(), f.clone());
    AdversarialTerms {
        combd: (0..3).map(|_| branch()).collect(),
        combd_decimated: (0..2).map(|_| branch()).collect(),
        sbd: (0..4).map(|_| branch()).collect(),
    }
}

#[test]
fn adversarial_optima_and_anti_optima() {
    assert_eq!(losses::lsgan_d(&[1.0f64; 9], &[0.0; 9]).unwrap(), 0.0);
    assert_eq!(losses::lsgan_d(&[0.0f64; 9], &[1.0; 9]).unwrap(), 2.0);
    assert_eq!(losses::lsgan_g(&[1.0f64; 9]).unwrap(), 0.0);
    assert_eq!(losses::lsgan_g(&[0.0f64; 9]).unwrap(), 1.0);
    assert!(losses::lsgan_d(&[1.0f64; 3], &[0.0; 4]).is_err());
}

#[test]
fn adversarial_terms_match_elementwise_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 4, 33] {
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut d = 0.0;
        let mut g = 0.0;
        for i in 0..n {
            d += (r[i] - 1.0) * (r[i] - 1.0) / n as f64 + f[i] * f[i] / n as f64;
            g += (f[i] - 1.0) * (f[i] - 1.0) / n as f64;
        }
        assert!((losses::lsgan_d(&r, &f).unwrap() - d).abs() < 1e-12);
        assert!((losses::lsgan_g(&f).unwrap() - g).abs() < 1e-12);
    }
}

#[test]
fn feature_matching_values() {
    let a = vec![vec![0.5f64, -1.0, 2.0], vec![3.0]];
    assert_eq!(losses::feature_matching(&a, &a).unwrap(), 0.0);
    let delta = 0.25;
    let b: Vec<Vec<f64>> = a.iter().map(|m| m.iter().map(|v| v + delta).collect()).collect();
    // per-map mean of |δ| summed over two maps
    assert!((losses::feature_matching(&a, &b).unwrap() - 2.0 * delta).abs() < 1e-12);
    assert!(losses::feature_matching(&a, &a[..1].to_vec()).is_err());
}

#[test]
fn mel_reconstruction_values() {
    let ex = MelExtractor::<f64>::standard(22050).unwrap();
    let x = Waveform::<f64>::sine(440.0, 0.5, 4096, 22050).samples;
    let zero = vec![0.0; 4096];
    assert_eq!(losses::mel_reconstruction(&ex, &x, &x).unwrap(), 0.0);
    let a = ex.mel_spectrogram(&Waveform::new(x.clone(), 22050)).unwrap();
    let b = ex.mel_spectrogram(&Waveform::new(zero.clone(), 22050)).unwrap();
    let brute = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.values.len() as f64;
    let l = losses::mel_reconstruction(&ex, &x, &zero).unwrap();
    assert!((l - brute).abs() < 1e-12);
    assert!(l > 0.0);
    assert_eq!(l, losses::mel_reconstruction(&ex, &zero, &x).unwrap());
    assert!(losses::mel_reconstruction(&ex, &x, &zero[..4000]).is_err());
}

#[test]
fn default_weights() {
    let w = LossWeights::default();
    assert_eq!((w.lambda_fm, w.lambda_spec), (2.0, 45.0));
}

#[test]
fn totals_vanish_at_the_optimum() {
    let w = LossWeights::default();
    let d = losses::total_losses(&optimal_terms(), 0.0, &w).unwrap();
    assert_eq!(d.total_d, 0.0);
    // the generator optimum has its output scored as real
    let mut t = optimal_terms();
    for b in t.combd.iter_mut().chain(&mut t.combd_decimated).chain(&mut t.sbd) {
        b.fake.score.iter_mut().for_each(|v| *v = 1.0);
    }
    let g = losses::total_losses(&t, 0.0, &w).unwrap();
    assert_eq!(g.total_g, 0.0);
    assert_eq!(g.total_d, 9.0);
}

#[test]
fn breakdown_resums_to_totals() {
    for seed in 0..5 {
        let w = LossWeights::default();
        let b = losses::total_losses(&random_terms(seed), 0.7, &w).unwrap();
        let (g, d) = losses::resum(&b.breakdown, &w);
        assert!((g - b.total_g).abs() <= 1e-6 * b.total_g.abs().max(1.0));
        assert!((d - b.total_d).abs() <= 1e-6 * b.total_d.abs().max(1.0));
        // 9 branches × 3 terms plus the mel term
        assert_eq!(b.breakdown.len(), 28);
        assert!(b.breakdown.contains_key("combd2_dec.fm"));
        assert!(b.breakdown.contains_key("sbd4.d"));
    }
}

#[test]
fn discriminator_total_ignores_reconstruction_terms() {
    let w = LossWeights::default();
    let t = random_terms(3);
    let a = losses::total_losses(&t, 0.0, &w).unwrap();
    let b = losses::total_losses(&t, 5.0, &LossWeights { lambda_fm: 7.0, ..w }).unwrap();
    assert_eq!(a.total_d, b.total_d);
    assert!(b.total_g > a.total_g);
}

#[test]
fn composition_rejects_missing_branches() {
    let mut t = random_terms(0);
    t.combd_decimated.pop();
    assert!(losses::total_losses(&t, 0.0, &LossWeights::default()).is_err());
}

#[test]
fn graph_objectives_match_slice_objectives() {
    let terms = random_terms(11);
    let w = LossWeights::default();
    let mut g = Graph::<f64>::new();
    let node = |g: &mut Graph<f64>, v: &Vec<f64>| g.constant(Tensor::new([1, 1, v.len()], v.clone()).unwrap());
    let lift = |side: &DiscriminatorOutput<Vec<f64>>, g: &mut Graph<f64>| DiscriminatorOutput {
        score: node(g, &side.score),
        features: side.features.iter().map(|f| node(g, f)).collect(),
    };
    let lift_all = |bs: &[BranchPair<Vec<f64>>], g: &mut Graph<f64>| {
        bs.iter().map(|b| BranchPair { real: lift(&b.real, g), fake: lift(&b.fake, g) }).collect::<Vec<_>>()
    };
    let gt = AdversarialTerms {
        combd: lift_all(&terms.combd, &mut g),
        combd_decimated: lift_all(&terms.combd_decimated, &mut g),
        sbd: lift_all(&terms.sbd, &mut g),
    };
    let mel = g.constant(Tensor::scalar(0.4));
    let gen = losses::graph::generator_total(&mut g, &gt, mel, &w).unwrap();
    let dis = losses::graph::discriminator_total(&mut g, &gt).unwrap();
    let want = losses::total_losses(&terms, 0.4, &w).unwrap();
    assert!((g.value(gen.total).item() - want.total_g).abs() < 1e-12);
    assert!((g.value(dis.total).item() - want.total_d).abs() < 1e-12);
    let mut got = gen.values(&g);
    got.extend(dis.values(&g));
    assert_eq!(got.keys().collect::<Vec<_>>(), want.breakdown.keys().collect::<Vec<_>>());
    for (k, v) in &got {
        assert!((v - want.breakdown[k]).abs() < 1e-12, "{k}");
    }
}

#[test]
fn graph_mel_term_matches_slice_term() {
    let cfg = StftConfig { fft_size: 64, win_size: 64, hop_size: 16 };
    let ex = Arc::new(MelExtractor::<f64>::new(cfg, 22050, 8).unwrap());
    let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.21).sin() * 0.4).collect();
    let y: Vec<f64> = (0..256).map(|i| (i as f64 * 0.05).cos() * 0.3).collect();
    let mut g = Graph::new();
    let real = ex.mel_spectrogram(&Waveform::new(x.clone(), 22050)).unwrap();
    let real = g.constant(Tensor::new([1, 8, real.n_frames], real.values).unwrap());
    let fake = g.constant(Tensor::new([1, 1, 256], y.clone()).unwrap());
    let l = losses::graph::mel_reconstruction(&mut g, &ex, real, fake).unwrap();
    let want = losses::mel_reconstruction(&ex, &x, &y).unwrap();
    assert!((g.value(l).item() - want).abs() < 1e-12);
}

proptest! {
    #[test]
    fn all_terms_are_nonnegative(seed in 0u64..1000, mel in 0.0f64..10.0) {
        let b = losses::total_losses(&random_terms(seed), mel, &LossWeights::default()).unwrap();
        prop_assert!(b.breakdown.values().all(|&v| v >= 0.0));
        prop_assert!(b.total_g >= 0.0 && b.total_d >= 0.0);
    }

    #[test]
    fn feature_matching_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 1..20), shift in -1.0f64..1.0) {
        let b: Vec<f64> = a.iter().map(|v| v * 0.5 + shift).collect();
        let l1 = losses::feature_matching(&[a.clone()], &[b.clone()]).unwrap();
        let l2 = losses::feature_matching(&[b], &[a]).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
    }
}
