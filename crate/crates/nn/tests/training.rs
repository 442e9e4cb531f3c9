use avocodo_core::io::write_wav;
use avocodo_core::{MelSpectrogram, Waveform};
use avocodo_nn::dataset::{load_dataset, Dataset};
use avocodo_nn::trainer::{generator_checkpoint, StepLog};
use avocodo_nn::*;

fn quick_config() -> TrainConfig {
    TrainConfig { generator: GeneratorConfig::tiny(), ..TrainConfig::desk() }
}

fn clip() -> Waveform<f32> {
    let mut w = Waveform::<f32>::sine(220.0, 0.3, 22050, 22050);
    for (i, s) in w.samples.iter_mut().enumerate() {
        *s += 0.1 * ((i as f32) * 0.173).sin();
    }
    w
}

fn run(trainer: &mut Trainer32, data: &Dataset<f32>, steps: u64) -> Vec<StepLog> {
    let mut logs = Vec::new();
    trainer.fit(data, steps, |l| logs.push(l.clone())).unwrap();
    logs
}

#[test]
fn learning_rate_schedule() {
    let c = AdamWConfig::default();
    assert_eq!(c.lr_at(0), 0.002);
    for e in [1, 10, 500] {
        assert!((c.lr_at(e) - 0.002 * 0.999f64.powi(e as i32)).abs() < 1e-15);
    }
    let t = Trainer32::new(TrainConfig { batch_size: 4, ..quick_config() }, 10).unwrap();
    // ten items at batch four: three steps per epoch
    assert_eq!(t.epoch(), 0);
    assert_eq!(t.lr(), 0.002);
}

#[test]
fn zero_gradients_shrink_by_the_decay_factor() {
    let g = Generator64::new(GeneratorConfig::tiny(), 0).unwrap();
    let mut store = g.params().clone();
    let before = store.clone();
    let cfg = AdamWConfig::default();
    let mut opt = AdamW::new(cfg, &store);
    let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
    let lr = 0.002;
    opt.update(&mut store, &zeros, lr).unwrap();
    let factor = 1.0 - lr * cfg.weight_decay;
    for ((_, a), (_, b)) in store.iter().zip(before.iter()) {
        for (x, y) in a.value.data().iter().zip(b.value.data()) {
            assert_eq!(*x, y * factor);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data = Dataset::from_waveforms(vec![clip()]).unwrap();
    let mut a = Trainer32::new(quick_config(), 1).unwrap();
    let mut b = Trainer32::new(quick_config(), 1).unwrap();
    let la = run(&mut a, &data, 6);
    let lb = run(&mut b, &data, 6);
    assert_eq!(la, lb);
    assert_eq!(a.generator.params(), b.generator.params());
    assert_eq!(a.combd.params(), b.combd.params());
    assert_eq!(a.sbd.params(), b.sbd.params());
    assert!(la.iter().all(|l| l.losses.is_finite()));
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::from_waveforms(vec![clip()]).unwrap();
    let mut straight = Trainer32::new(quick_config(), 1).unwrap();
    let all = run(&mut straight, &data, 5);

    let mut first = Trainer32::new(quick_config(), 1).unwrap();
    let head = run(&mut first, &data, 3);
    let path = dir.path().join("state.avck");
    first.save(&path).unwrap();
    drop(first);
    let mut resumed = Trainer32::load(&path).unwrap();
    assert_eq!(resumed.step(), 3);
    let tail = run(&mut resumed, &data, 2);
    assert_eq!([head, tail].concat(), all);
    assert_eq!(resumed.generator.params(), straight.generator.params());
    assert_eq!(resumed.sbd.params(), straight.sbd.params());
}

#[test]
fn step_log_breakdown_resums() {
    let data = Dataset::from_waveforms(vec![clip()]).unwrap();
    let mut t = Trainer32::new(quick_config(), 1).unwrap();
    let log = run(&mut t, &data, 1).pop().unwrap();
    assert_eq!(log.step, 1);
    let (g, d) = losses::resum(&log.losses.breakdown, &LossWeights::default());
    assert!((g - log.losses.total_g).abs() <= 1e-6 * g.abs().max(1.0));
    assert!((d - log.losses.total_d).abs() <= 1e-6 * d.abs().max(1.0));
    let json = serde_json::to_value(&log).unwrap();
    assert!(json["mel"].is_number() && json["total_g"].is_number() && json["lr"].is_number());
}

#[test]
fn non_finite_input_aborts_with_breakdown() {
    let mut t = Trainer32::new(quick_config(), 1).unwrap();
    let mut w = clip();
    w.samples.truncate(8192);
    let mel = t.extractor().mel_spectrogram(&w).unwrap();
    let mut bad = w.clone();
    bad.samples[100] = f32::NAN;
    let err = t.train_step(&[(bad, mel)]).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }), "{err}");
}

#[test]
fn checkpoint_round_trip_preserves_inference() {
    let dir = tempfile::tempdir().unwrap();
    let g = Generator32::new(GeneratorConfig::tiny(), 5).unwrap();
    let ck = generator_checkpoint(&g).unwrap();
    let path = dir.path().join("g.avck");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    let mel = MelSpectrogram::new(80, 32, (0..80 * 32).map(|i| ((i % 17) as f32) * -0.3).collect(), 22050).unwrap();
    let a = infer(&loaded, &mel).unwrap();
    assert_eq!(a.len(), 32 * 256);
    assert_eq!(a.samples, g.synthesize(&mel).unwrap());
    assert!(a.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0));
}

#[test]
fn inference_from_a_training_checkpoint() {
    let t = Trainer32::new(quick_config(), 1).unwrap();
    let ck = t.to_checkpoint().unwrap();
    let silence = MelSpectrogram::new(80, 4, vec![(1e-5f32).ln(); 320], 22050).unwrap();
    let w = infer(&ck, &silence).unwrap();
    assert_eq!(w.samples, t.synthesize(&silence).unwrap().samples);
}

#[test]
fn inference_requires_generator_entries() {
    let g = Generator32::new(GeneratorConfig::tiny(), 5).unwrap();
    let mut ck = generator_checkpoint(&g).unwrap();
    ck.entries.pop();
    let mel = MelSpectrogram::new(80, 1, vec![0.0f32; 80], 22050).unwrap();
    assert!(infer(&ck, &mel).is_err());
    let empty = Checkpoint::new(serde_json::json!({}));
    assert!(load_generator::<f32>(&empty).is_err());
}

#[test]
fn dataset_validation() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset::<f32>(dir.path()).is_err());
    write_wav(dir.path().join("a_fast.wav"), &Waveform::<f32>::sine(440.0, 0.3, 44100, 44100)).unwrap();
    assert!(load_dataset::<f32>(dir.path()).is_err());
    write_wav(dir.path().join("b_ok.wav"), &clip()).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let data = load_dataset::<f32>(dir.path()).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data.rejected.len(), 1);
    assert!(data.items[0].0.ends_with("b_ok.wav"));
    let t = Trainer32::new(quick_config(), data.len()).unwrap();
    let (w, m) = data.sample(8192, t.extractor(), &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0)).unwrap();
    assert_eq!((w.len(), m.n_frames, m.n_mels), (8192, 32, 80));
}

#[test]
fn config_toml_round_trip() {
    let c = TrainConfig::default();
    assert_eq!((c.segment, c.batch_size, c.seed), (8192, 16, 1234));
    let back = TrainConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
    let partial = TrainConfig::from_toml("batch_size = 2\n[optimizer]\nlr = 0.001\n").unwrap();
    assert_eq!(partial.batch_size, 2);
    assert_eq!(partial.optimizer.lr, 0.001);
    assert_eq!(partial.optimizer.beta1, 0.8);
    let s = TrainConfig::singing();
    assert_eq!((s.segment, s.sbd.segment), (65536, 65536));
    assert!(TrainConfig { segment: 8000, ..TrainConfig::desk() }.validate().is_err());
}

#[test]
fn step_log_json_round_trips() {
    let data = Dataset::from_waveforms(vec![clip()]).unwrap();
    let mut t = Trainer32::new(quick_config(), 1).unwrap();
    let log = run(&mut t, &data, 1).pop().unwrap();
    let text = serde_json::to_string(&log).unwrap();
    assert_eq!(serde_json::from_str::<StepLog>(&text).unwrap(), log);
}
