//! Training state, the alternating update step, checkpoints and inference.

use std::path::Path;
use std::sync::Arc;

use avocodo_core::{MelExtractor, MelSpectrogram, Real, Waveform, SAMPLE_RATE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::combd::{Combd, CombdConfig};
use crate::dataset::Dataset;
use crate::disc::DiscriminatorOutput;
use crate::error::{config_err, Error, Result};
use crate::generator::{Generator, GeneratorConfig, HOP_SIZE};
use crate::graph::{Bound, Graph, Var};
use crate::losses::{graph as lg, AdversarialTerms, BranchPair, LossBundle, LossWeights};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::ParamStore;
use crate::sbd::{Sbd, SbdConfig};
use crate::tensor::Tensor;

pub const SPEECH_SEGMENT: usize = 8192;
pub const SINGING_SEGMENT: usize = 65536;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub segment: usize,
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub losses: LossWeights,
    pub generator: GeneratorConfig,
    pub combd: CombdConfig,
    pub sbd: SbdConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            segment: SPEECH_SEGMENT,
            batch_size: 16,
            max_steps: 3_000_000,
            seed: 1234,
            optimizer: AdamWConfig::default(),
            losses: LossWeights::default(),
            generator: GeneratorConfig::v1(),
            combd: CombdConfig::default(),
            sbd: SbdConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Long segments for singing voice.
    pub fn singing() -> Self {
        let mut c = Self { segment: SINGING_SEGMENT, ..Self::default() };
        c.sbd.segment = SINGING_SEGMENT;
        c
    }

    /// Narrow generator and discriminators with batch 1, for single-core runs.
    pub fn desk() -> Self {
        Self {
            batch_size: 1,
            generator: GeneratorConfig::v2_tiny(),
            combd: CombdConfig::tiny(),
            sbd: SbdConfig::tiny(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment == 0 || self.segment % HOP_SIZE != 0 {
            return config_err(format!("segment {} is not a multiple of {HOP_SIZE}", self.segment));
        }
        if self.sbd.segment != self.segment {
            return config_err(format!("sub-band discriminator built for {} samples, segment is {}", self.sbd.segment, self.segment));
        }
        if self.batch_size == 0 {
            return config_err("batch size must be positive");
        }
        self.optimizer.validate()?;
        self.losses.validate()?;
        self.generator.validate()?;
        self.combd.validate()?;
        self.sbd.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    #[serde(flatten)]
    pub losses: LossBundle,
}

pub struct Trainer<T: Real> {
    pub config: TrainConfig,
    pub generator: Generator<T>,
    pub combd: Combd<T>,
    pub sbd: Sbd<T>,
    opt_g: AdamW<T>,
    opt_combd: AdamW<T>,
    opt_sbd: AdamW<T>,
    rng: ChaCha8Rng,
    step: u64,
    steps_per_epoch: u64,
    extractor: Arc<MelExtractor<T>>,
}

fn batch_tensor<T: Real>(rows: &[&[T]], channels: usize) -> Result<Tensor<T>> {
    let len = rows.first().map_or(0, |r| r.len()) / channels;
    let mut data = Vec::with_capacity(rows.len() * channels * len);
    for r in rows {
        if r.len() != channels * len {
            return config_err("batch items differ in length");
        }
        data.extend_from_slice(r);
    }
    Tensor::new([rows.len(), channels, len], data)
}

fn pairs(real: Vec<DiscriminatorOutput>, fake: Vec<DiscriminatorOutput>) -> Vec<BranchPair<Var>> {
    real.into_iter().zip(fake).map(|(real, fake)| BranchPair { real, fake }).collect()
}

impl<T: Real> Trainer<T> {
    /// Fresh state; `n_items` sets the epoch length for the decay schedule.
    pub fn new(config: TrainConfig, n_items: usize) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator.clone(), config.seed)?;
        let combd = Combd::new(config.combd.clone(), config.seed.wrapping_add(1))?;
        let sbd = Sbd::new(config.sbd.clone(), config.seed.wrapping_add(2))?;
        let opt_g = AdamW::new(config.optimizer, generator.params());
        let opt_combd = AdamW::new(config.optimizer, combd.params());
        let opt_sbd = AdamW::new(config.optimizer, sbd.params());
        let steps_per_epoch = n_items.max(1).div_ceil(config.batch_size) as u64;
        let extractor = Arc::new(MelExtractor::standard(SAMPLE_RATE)?);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, generator, combd, sbd, opt_g, opt_combd, opt_sbd, rng, step: 0, steps_per_epoch, extractor })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn extractor(&self) -> &Arc<MelExtractor<T>> {
        &self.extractor
    }

    pub fn epoch(&self) -> u64 {
        self.step / self.steps_per_epoch
    }

    pub fn lr(&self) -> f64 {
        self.config.optimizer.lr_at(self.epoch())
    }

    /// `batch_size` random windows drawn with the state's generator.
    pub fn sample_batch(&mut self, data: &Dataset<T>) -> Result<Vec<(Waveform<T>, MelSpectrogram<T>)>> {
        (0..self.config.batch_size).map(|_| data.sample(self.config.segment, &self.extractor, &mut self.rng)).collect()
    }

    /// Discriminator update on detached generator outputs, then generator
    /// update against the refreshed discriminators.
    pub fn train_step(&mut self, batch: &[(Waveform<T>, MelSpectrogram<T>)]) -> Result<StepLog> {
        if batch.is_empty() {
            return config_err("empty batch");
        }
        let lr = self.lr();
        let n_mels = self.generator.config().n_mels;
        let waves: Vec<&[T]> = batch.iter().map(|(w, _)| w.samples.as_slice()).collect();
        let mels: Vec<&[T]> = batch.iter().map(|(_, m)| m.values.as_slice()).collect();
        let wave_t = batch_tensor(&waves, 1)?;
        let mel_t = batch_tensor(&mels, n_mels)?;

        let mut gg = Graph::new();
        let pg = gg.bind(self.generator.params(), true);
        let mel = gg.constant(mel_t.clone());
        let outs = self.generator.forward(&mut gg, &pg, mel)?;
        if gg.shape(outs.full)[2] != wave_t.len() {
            return config_err(format!("mel yields {} samples, segment has {}", gg.shape(outs.full)[2], wave_t.len()));
        }

        // discriminator step
        let mut gd = Graph::new();
        let pc = gd.bind(self.combd.params(), true);
        let ps = gd.bind(self.sbd.params(), true);
        let fakes = outs.as_array().map(|v| gd.constant(gg.value(v).clone()));
        let d_terms = self.adversarial_terms(&mut gd, &pc, &ps, wave_t.clone(), fakes)?;
        let d_obj = lg::discriminator_total(&mut gd, &d_terms)?;
        let total_d = gd.value(d_obj.total).item().as_f64();
        let mut bundle = LossBundle { total_d, breakdown: d_obj.values(&gd), ..LossBundle::default() };
        if !total_d.is_finite() {
            return Err(self.non_finite(&bundle));
        }
        let grads = gd.backward(d_obj.total)?;
        let gc = grads.for_params(&pc, self.combd.params());
        let gs = grads.for_params(&ps, self.sbd.params());
        drop(gd);
        self.opt_combd.update(self.combd.params_mut(), &gc, lr)?;
        self.opt_sbd.update(self.sbd.params_mut(), &gs, lr)?;

        // generator step
        let pc = gg.bind(self.combd.params(), false);
        let ps = gg.bind(self.sbd.params(), false);
        let g_terms = self.adversarial_terms(&mut gg, &pc, &ps, wave_t, outs.as_array())?;
        let real_mel = gg.constant(mel_t);
        let mel_loss = lg::mel_reconstruction(&mut gg, &self.extractor, real_mel, outs.full)?;
        let g_obj = lg::generator_total(&mut gg, &g_terms, mel_loss, &self.config.losses)?;
        bundle.total_g = gg.value(g_obj.total).item().as_f64();
        bundle.breakdown.extend(g_obj.values(&gg));
        if !bundle.is_finite() {
            return Err(self.non_finite(&bundle));
        }
        let grads = gg.backward(g_obj.total)?;
        let ggrads = grads.for_params(&pg, self.generator.params());
        self.opt_g.update(self.generator.params_mut(), &ggrads, lr)?;

        self.step += 1;
        Ok(StepLog { step: self.step, lr, losses: bundle })
    }

    fn non_finite(&self, bundle: &LossBundle) -> Error {
        Error::NonFinite {
            step: self.step,
            breakdown: serde_json::to_string(bundle).unwrap_or_else(|e| e.to_string()),
        }
    }

    /// Real and generated outputs of every discriminator branch.
    fn adversarial_terms(
        &self,
        g: &mut Graph<T>,
        pc: &Bound,
        ps: &Bound,
        wave: Tensor<T>,
        fakes: [Var; 3],
    ) -> Result<AdversarialTerms<Var>> {
        let x3 = g.constant(wave);
        let [x1, x2] = self.combd.decimate(g, x3)?;
        let real = self.combd.forward_real(g, pc, [x1, x2, x3])?;
        let fake = self.combd.forward_scales(g, pc, fakes)?;
        let real_dec = real[..2].to_vec();
        let sbd_real = self.sbd.forward_sbd(g, ps, x3)?;
        let sbd_fake = self.sbd.forward_sbd(g, ps, fakes[2])?;
        Ok(AdversarialTerms {
            combd: pairs(real, fake.direct),
            combd_decimated: pairs(real_dec, fake.decimated),
            sbd: pairs(sbd_real, sbd_fake),
        })
    }

    /// Runs `steps` updates on random batches, passing each log line to `sink`.
    pub fn fit(&mut self, data: &Dataset<T>, steps: u64, mut sink: impl FnMut(&StepLog)) -> Result<()> {
        for _ in 0..steps {
            let batch = self.sample_batch(data)?;
            let log = self.train_step(&batch)?;
            sink(&log);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "kind": "training",
            "config": serde_json::to_value(&self.config)?,
            "step": self.step,
            "steps_per_epoch": self.steps_per_epoch,
            "rng_word_pos": self.rng.get_word_pos().to_string(),
            "optimizer_steps": [self.opt_g.step, self.opt_combd.step, self.opt_sbd.step],
        });
        let mut ck = Checkpoint::new(meta);
        ck.add_store(GENERATOR_PREFIX, self.generator.params());
        ck.add_store("", self.combd.params());
        ck.add_store("", self.sbd.params());
        for (tag, opt, store) in [
            ("generator", &self.opt_g, self.generator.params()),
            ("combd", &self.opt_combd, self.combd.params()),
            ("sbd", &self.opt_sbd, self.sbd.params()),
        ] {
            for ((_, p), (m, v)) in store.iter().zip(opt.m.iter().zip(&opt.v)) {
                let dims = p.value.shape().to_vec();
                ck.push(format!("adam.{tag}.m.{}", p.name), dims.clone(), m);
                ck.push(format!("adam.{tag}.v.{}", p.name), dims, v);
            }
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.metadata;
        let config: TrainConfig = serde_json::from_value(meta["config"].clone())?;
        let field = |k: &str| meta[k].as_u64().ok_or_else(|| Error::Checkpoint(format!("metadata lacks {k}")));
        let step = field("step")?;
        let steps_per_epoch = field("steps_per_epoch")?.max(1);
        let word_pos: u128 = meta["rng_word_pos"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("metadata lacks rng_word_pos".into()))?;
        let opt_steps: Vec<u64> = serde_json::from_value(meta["optimizer_steps"].clone())?;
        let mut t = Self::new(config, 1)?;
        t.step = step;
        t.steps_per_epoch = steps_per_epoch;
        t.rng.set_word_pos(word_pos);
        ck.load_store(GENERATOR_PREFIX, t.generator.params_mut())?;
        ck.load_store("", t.combd.params_mut())?;
        ck.load_store("", t.sbd.params_mut())?;
        let restore = |tag: &str, opt: &mut AdamW<T>, store: &ParamStore<T>, steps: u64| -> Result<()> {
            opt.step = steps;
            for (i, (_, p)) in store.iter().enumerate() {
                for (kind, dst) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
                    let key = format!("adam.{tag}.{kind}.{}", p.name);
                    let e = ck.get(&key).ok_or_else(|| Error::Checkpoint(format!("missing entry {key}")))?;
                    if e.numel() != dst.len() {
                        return Err(Error::Checkpoint(format!("{key} has {} values", e.numel())));
                    }
                    dst.copy_from_slice(&e.values::<T>());
                }
            }
            Ok(())
        };
        let [sg, sc, ss] = <[u64; 3]>::try_from(opt_steps).map_err(|_| Error::Checkpoint("optimizer_steps".into()))?;
        restore("generator", &mut t.opt_g, t.generator.params(), sg)?;
        restore("combd", &mut t.opt_combd, t.combd.params(), sc)?;
        restore("sbd", &mut t.opt_sbd, t.sbd.params(), ss)?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Full-rate resynthesis of `mel` with the current generator.
    pub fn synthesize(&self, mel: &MelSpectrogram<T>) -> Result<Waveform<T>> {
        Ok(Waveform::new(self.generator.synthesize(mel)?, SAMPLE_RATE))
    }
}

pub const GENERATOR_PREFIX: &str = "generator.";

/// Generator-only checkpoint, enough for inference.
pub fn generator_checkpoint<T: Real>(generator: &Generator<T>) -> Result<Checkpoint> {
    let meta = serde_json::json!({
        "kind": "generator",
        "generator": serde_json::to_value(generator.config())?,
    });
    let mut ck = Checkpoint::new(meta);
    ck.add_store(GENERATOR_PREFIX, generator.params());
    Ok(ck)
}

/// Rebuilds the generator of a training or generator-only checkpoint.
pub fn load_generator<T: Real>(ck: &Checkpoint) -> Result<Generator<T>> {
    let cfg = match (&ck.metadata["generator"], &ck.metadata["config"]["generator"]) {
        (serde_json::Value::Null, serde_json::Value::Null) => {
            return Err(Error::Checkpoint("no generator configuration in metadata".into()))
        }
        (serde_json::Value::Null, c) | (c, _) => serde_json::from_value::<GeneratorConfig>(c.clone())?,
    };
    let mut generator = Generator::new(cfg, 0)?;
    ck.load_store(GENERATOR_PREFIX, generator.params_mut())?;
    Ok(generator)
}

/// `x̂₃` for `mel` using only the generator entries of `ck`.
pub fn infer<T: Real>(ck: &Checkpoint, mel: &MelSpectrogram<T>) -> Result<Waveform<T>> {
    let generator = load_generator::<T>(ck)?;
    Ok(Waveform::new(generator.synthesize(mel)?, mel.sample_rate))
}
