//! Raw little-endian containers.
//!
//! `AVSB` (sub-bands): magic, version u16, n_bands u16, length u32,
//! sample_rate u32, then `n_bands × length` f32 values band after band.
//! The sample rate is that of the full-band source signal.
//!
//! `AVML` (mel raster): magic, n_mels u16, frames u32, then
//! `n_mels × frames` f32 values, one mel row after another.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::MelSpectrogram;
use crate::filterbank::SubbandSignals;
use crate::scalar::Real;
use crate::waveform::SAMPLE_RATE;

pub const SUBBAND_MAGIC: &[u8; 4] = b"AVSB";
pub const SUBBAND_VERSION: u16 = 1;
pub const MEL_MAGIC: &[u8; 4] = b"AVML";

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("unexpected end of file".into())),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn encode_subbands<T: Real>(sb: &SubbandSignals<T>) -> Result<Vec<u8>> {
    let n_bands = u16::try_from(sb.n_bands).map_err(|_| Error::Format("too many bands".into()))?;
    let len = u32::try_from(sb.length_per_band).map_err(|_| Error::Format("band too long".into()))?;
    let mut out = Vec::with_capacity(16 + sb.data.len() * 4);
    out.extend_from_slice(SUBBAND_MAGIC);
    out.extend_from_slice(&SUBBAND_VERSION.to_le_bytes());
    out.extend_from_slice(&n_bands.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&sb.source_rate.to_le_bytes());
    for v in &sb.data {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_subbands<T: Real>(buf: &[u8]) -> Result<SubbandSignals<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != SUBBAND_MAGIC {
        return Err(Error::Format("not an AVSB file".into()));
    }
    let version = c.u16()?;
    if version != SUBBAND_VERSION {
        return Err(Error::Format(format!("unsupported AVSB version {version}")));
    }
    let n_bands = c.u16()? as usize;
    let length_per_band = c.u32()? as usize;
    let source_rate = c.u32()?;
    let data = c.f32s(n_bands * length_per_band)?.into_iter().map(|v| T::lit(v as f64)).collect();
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after AVSB payload".into()));
    }
    Ok(SubbandSignals { n_bands, length_per_band, data, source_rate })
}

pub fn encode_mel<T: Real>(mel: &MelSpectrogram<T>) -> Result<Vec<u8>> {
    let n_mels = u16::try_from(mel.n_mels).map_err(|_| Error::Format("too many mel bands".into()))?;
    let frames = u32::try_from(mel.n_frames).map_err(|_| Error::Format("too many frames".into()))?;
    let mut out = Vec::with_capacity(10 + mel.values.len() * 4);
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&n_mels.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    for v in &mel.values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

/// The container carries no rate; the corpus rate is assumed.
pub fn decode_mel<T: Real>(buf: &[u8]) -> Result<MelSpectrogram<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MEL_MAGIC {
        return Err(Error::Format("not an AVML file".into()));
    }
    let n_mels = c.u16()? as usize;
    let n_frames = c.u32()? as usize;
    let values = c.f32s(n_mels * n_frames)?.into_iter().map(|v| T::lit(v as f64)).collect();
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after AVML payload".into()));
    }
    MelSpectrogram::new(n_mels, n_frames, values, SAMPLE_RATE).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_subbands<T: Real>(path: impl AsRef<Path>, sb: &SubbandSignals<T>) -> Result<()> {
    Ok(fs::write(path, encode_subbands(sb)?)?)
}

pub fn read_subbands<T: Real>(path: impl AsRef<Path>) -> Result<SubbandSignals<T>> {
    decode_subbands(&fs::read(path)?)
}

pub fn write_mel<T: Real>(path: impl AsRef<Path>, mel: &MelSpectrogram<T>) -> Result<()> {
    Ok(fs::write(path, encode_mel(mel)?)?)
}

pub fn read_mel<T: Real>(path: impl AsRef<Path>) -> Result<MelSpectrogram<T>> {
    decode_mel(&fs::read(path)?)
}
