use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::waveform::{Waveform, SAMPLE_RATE};

/// Reads any mono integer or float WAV into `[-1, 1]` samples.
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!("expected mono audio, found {} channels", spec.channels)));
    }
    let samples: Vec<T> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| T::lit(v as f64 * scale))).collect::<Result<_, _>>()?
        }
        hound::SampleFormat::Float => {
            reader.samples::<f32>().map(|s| s.map(|v| T::lit(v as f64))).collect::<Result<_, _>>()?
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Outcome of validating a file against the training corpus format.
#[derive(Debug)]
pub enum WavCheck<T> {
    Accepted(Waveform<T>),
    Rejected(String),
}

/// Accepts only 16-bit PCM mono at the corpus rate.
pub fn read_wav_checked<T: Real>(path: impl AsRef<Path>) -> Result<WavCheck<T>> {
    let reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    drop(reader);
    if spec.sample_rate != SAMPLE_RATE {
        return Ok(WavCheck::Rejected(format!("sample rate {} Hz, expected {SAMPLE_RATE}", spec.sample_rate)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Ok(WavCheck::Rejected(format!("{:?} {}-bit, expected 16-bit PCM", spec.sample_format, spec.bits_per_sample)));
    }
    if spec.channels != 1 {
        return Ok(WavCheck::Rejected(format!("{} channels, expected mono", spec.channels)));
    }
    Ok(WavCheck::Accepted(read_wav(path)?))
}

/// Writes 16-bit PCM mono, clipping to `[-1, 1]`.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, x: &Waveform<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &x.samples {
        let v = (s.as_f64().clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
