use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use avocodo_core::artifact::{self, DownsampleMethod};
use avocodo_core::io::{read_mel, read_subbands, read_wav, write_mel, write_subbands, write_wav};
use avocodo_core::metrics::{evaluate_pair, PairMetrics};
use avocodo_core::{MelExtractor, PqmfBank, Waveform, SAMPLE_RATE};
use avocodo_nn::dataset::load_dataset;
use avocodo_nn::trainer::generator_checkpoint;
use avocodo_nn::{infer, Checkpoint, TrainConfig, Trainer};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

const SUBBAND_FILE: &str = "subbands.avsb";
const STATE_FILE: &str = "state.avck";
const GENERATOR_FILE: &str = "generator.avck";
const LOG_FILE: &str = "train.jsonl";

#[derive(Parser)]
#[command(name = "avocodo", version, about = "Avocodo vocoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PQMF analysis and synthesis.
    #[command(subcommand)]
    Pqmf(PqmfCmd),
    /// Aliasing and imaging demonstrations.
    #[command(subcommand)]
    Artifact(ArtifactCmd),
    /// Acoustic features.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Prints a training configuration with every hyperparameter.
    Config {
        #[arg(long, value_enum, default_value_t = Preset::Speech)]
        preset: Preset,
    },
    /// Trains from a directory of 22050 Hz 16-bit mono WAV files.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/state.avck` when present.
        #[arg(long)]
        resume: bool,
    },
    /// Synthesizes a waveform from a mel raster or from the mel of a WAV file.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
        mel: Option<PathBuf>,
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective metrics between same-named reference and degraded files.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        deg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Speech,
    Singing,
    Desk,
}

#[derive(Subcommand)]
enum PqmfCmd {
    Analyze {
        #[arg(long)]
        bands: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    Synth {
        #[arg(long)]
        bands: usize,
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ArtifactCmd {
    Downsample {
        /// esds, avgpool or pqmf.
        #[arg(long)]
        method: DownsampleMethod,
        #[arg(long)]
        factor: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    AliasReport {
        #[arg(long)]
        tone: f64,
        #[arg(long)]
        factor: usize,
        #[arg(long, default_value_t = SAMPLE_RATE)]
        rate: u32,
        #[arg(long)]
        json: bool,
    },
    /// Log-magnitude STFT as a binary PGM image, low frequencies at the bottom.
    Spectrogram {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dynamic range mapped to the gray scale.
        #[arg(long, default_value_t = 80.0)]
        range_db: f64,
    },
}

#[derive(Subcommand)]
enum FeaturesCmd {
    Mel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pqmf(cmd) => pqmf(cmd),
        Command::Artifact(cmd) => artifact_cmd(cmd),
        Command::Features(FeaturesCmd::Mel { input, out }) => {
            let x = read_wav::<f32>(&input)?;
            let mel = MelExtractor::standard(x.sample_rate)?.mel_spectrogram(&x)?;
            write_mel(&out, &mel)?;
            println!("{} mel bands × {} frames", mel.n_mels, mel.n_frames);
            Ok(())
        }
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Speech => TrainConfig::default(),
                Preset::Singing => TrainConfig::singing(),
                Preset::Desk => TrainConfig::desk(),
            };
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
        Command::Train { config, data, steps, out, resume } => train(config, &data, steps, &out, resume),
        Command::Infer { ckpt, mel, wav, out } => {
            let ck = Checkpoint::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let mel = match (mel, wav) {
                (Some(m), _) => read_mel::<f32>(m)?,
                (None, Some(w)) => {
                    let x = read_wav::<f32>(&w)?;
                    MelExtractor::standard(x.sample_rate)?.mel_spectrogram(&x)?
                }
                (None, None) => bail!("either --mel or --wav is required"),
            };
            let y = infer(&ck, &mel)?;
            write_wav(&out, &y)?;
            println!("{} samples at {} Hz", y.len(), y.sample_rate);
            Ok(())
        }
        Command::Eval { reference, deg, out } => eval(&reference, &deg, &out),
    }
}

fn pqmf(cmd: PqmfCmd) -> Result<()> {
    match cmd {
        PqmfCmd::Analyze { bands, input, out_dir } => {
            let x = read_wav::<f32>(&input)?;
            let sb = PqmfBank::with_default_spec(bands)?.analyze(&x)?;
            fs::create_dir_all(&out_dir)?;
            write_subbands(out_dir.join(SUBBAND_FILE), &sb)?;
            println!("{} bands × {} samples", sb.n_bands, sb.length_per_band);
        }
        PqmfCmd::Synth { bands, in_dir, out } => {
            let sb = read_subbands::<f32>(in_dir.join(SUBBAND_FILE))?;
            if sb.n_bands != bands {
                bail!("{} holds {} bands, not {bands}", in_dir.display(), sb.n_bands);
            }
            let y = PqmfBank::with_default_spec(bands)?.synthesize(&sb)?;
            write_wav(&out, &y)?;
        }
    }
    Ok(())
}

fn artifact_cmd(cmd: ArtifactCmd) -> Result<()> {
    match cmd {
        ArtifactCmd::Downsample { method, factor, input, out } => {
            let x = read_wav::<f64>(&input)?;
            write_wav(&out, &artifact::downsample(&x, method, factor)?)?;
        }
        ArtifactCmd::AliasReport { tone, factor, rate, json } => {
            let report = artifact::alias_report(tone, rate, factor)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let fold = artifact::folded_frequency(tone, rate as f64 / factor as f64);
                println!("tone {tone} Hz, factor {factor}, folds to {fold:.1} Hz");
                println!("{:<16}{:>14}{:>16}", "method", "alias dB", "passband dB");
                for r in &report {
                    println!("{:<16}{:>14.2}{:>16.3}", r.method.to_string(), r.alias_energy_db, r.passband_distortion_db);
                }
            }
        }
        ArtifactCmd::Spectrogram { input, out, range_db } => {
            let x = read_wav::<f64>(&input)?;
            let ex = MelExtractor::<f64>::standard(x.sample_rate)?;
            let (frames, mag) = ex.stft_magnitude(&x.samples)?;
            write_pgm(&out, &mag, frames, range_db)?;
        }
    }
    Ok(())
}

/// `mag` is bin-major; row 0 of the image is the highest bin.
fn write_pgm(path: &Path, mag: &[f64], frames: usize, range_db: f64) -> Result<()> {
    let bins = mag.len() / frames.max(1);
    let db: Vec<f64> = mag.iter().map(|m| 20.0 * m.max(1e-10).log10()).collect();
    let top = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(bins * frames + 32);
    write!(out, "P5\n{frames} {bins}\n255\n")?;
    for k in (0..bins).rev() {
        for f in 0..frames {
            let level = ((db[k * frames + f] - top + range_db) / range_db).clamp(0.0, 1.0);
            out.push((level * 255.0).round() as u8);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn train(config: Option<PathBuf>, data: &Path, steps: u64, out: &Path, resume: bool) -> Result<()> {
    let cfg = match &config {
        Some(p) => TrainConfig::from_toml(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    let dataset = load_dataset::<f32>(data)?;
    for (path, why) in &dataset.rejected {
        eprintln!("rejected {}: {why}", path.display());
    }
    fs::create_dir_all(out)?;
    let state = out.join(STATE_FILE);
    let mut trainer = if resume && state.exists() {
        let t = Trainer::<f32>::load(&state)?;
        if config.is_some() && t.config != cfg {
            bail!("{} was trained with a different configuration", state.display());
        }
        t
    } else {
        Trainer::<f32>::new(cfg, dataset.len())?
    };
    let mut log = fs::OpenOptions::new().create(true).append(true).open(out.join(LOG_FILE))?;
    let mut failure = None;
    trainer.fit(&dataset, steps, |line| {
        let text = serde_json::to_string(line).expect("log lines serialize");
        println!("{text}");
        if let Err(e) = writeln!(log, "{text}") {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    trainer.save(&state)?;
    generator_checkpoint(&trainer.generator)?.save(out.join(GENERATOR_FILE))?;
    Ok(())
}

#[derive(Serialize)]
struct FileReport {
    file: String,
    #[serde(flatten)]
    metrics: PairMetrics,
}

#[derive(Serialize)]
struct EvalReport {
    files: Vec<FileReport>,
    aggregate: Aggregate,
}

#[derive(Serialize)]
struct Aggregate {
    count: usize,
    f0_rmse: f64,
    vuv_fpr: f64,
    vuv_fnr: f64,
    mcd: f64,
    ssim: f64,
}

fn wav_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
        .collect();
    names.sort();
    Ok(names)
}

fn eval(reference: &Path, deg: &Path, out: &Path) -> Result<()> {
    let mut files = Vec::new();
    for name in wav_names(reference)? {
        let d = deg.join(&name);
        if !d.exists() {
            eprintln!("no degraded counterpart for {name}");
            continue;
        }
        let x: Waveform<f64> = read_wav(reference.join(&name))?;
        let y: Waveform<f64> = read_wav(&d)?;
        let metrics = evaluate_pair(&x, &y).with_context(|| format!("evaluating {name}"))?;
        files.push(FileReport { file: name, metrics });
    }
    if files.is_empty() {
        bail!("no file names shared by {} and {}", reference.display(), deg.display());
    }
    let n = files.len() as f64;
    let mean = |f: fn(&PairMetrics) -> f64| files.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let aggregate = Aggregate {
        count: files.len(),
        f0_rmse: mean(|m| m.f0_rmse),
        vuv_fpr: mean(|m| m.vuv_fpr),
        vuv_fnr: mean(|m| m.vuv_fnr),
        mcd: mean(|m| m.mcd),
        ssim: mean(|m| m.ssim),
    };
    let report = EvalReport { files, aggregate };
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} files: F0 RMSE {:.2} Hz, MCD {:.3} dB, SSIM {:.4}",
        report.aggregate.count, report.aggregate.f0_rmse, report.aggregate.mcd, report.aggregate.ssim
    );
    Ok(())
}
