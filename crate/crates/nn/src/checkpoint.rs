//! `AVCK` container: named tensors with shapes plus JSON metadata.
//!
//! Layout (little-endian): magic `AVCK`, `u16` version, `u32` metadata length
//! and UTF-8 JSON, `u32` entry count, then per entry a `u16` name length and
//! name, a dtype byte (`0` = f32, `1` = f64), a `u8` rank, `u32` dims and the
//! raw values.

use std::path::Path;

use avocodo_core::Real;

use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const MAGIC: &[u8; 4] = b"AVCK";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn of<T: Real>() -> Self {
        if T::BYTES == 4 {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    bytes: Vec<u8>,
}

impl Entry {
    pub fn new<T: Real>(name: impl Into<String>, dims: Vec<usize>, values: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * T::BYTES);
        values.iter().for_each(|v| v.write_le(&mut bytes));
        Self { name: name.into(), dtype: Dtype::of::<T>(), dims, bytes }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Values as `T`; exact when the stored dtype is `T`.
    pub fn values<T: Real>(&self) -> Vec<T> {
        let w = self.dtype.width();
        self.bytes
            .chunks_exact(w)
            .map(|c| match self.dtype {
                d if d == Dtype::of::<T>() => T::read_le(c),
                Dtype::F32 => T::lit(f32::read_le(c) as f64),
                Dtype::F64 => T::lit(f64::read_le(c)),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub entries: Vec<Entry>,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return bad(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self { metadata, entries: Vec::new() }
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn push<T: Real>(&mut self, name: impl Into<String>, dims: Vec<usize>, values: &[T]) {
        self.entries.push(Entry::new(name, dims, values));
    }

    /// Adds every parameter as `{prefix}{name}`.
    pub fn add_store<T: Real>(&mut self, prefix: &str, store: &ParamStore<T>) {
        for (_, p) in store.iter() {
            self.push(format!("{prefix}{}", p.name), p.value.shape().to_vec(), p.value.data());
        }
    }

    /// Overwrites `store` from `{prefix}{name}` entries; every parameter must be present.
    pub fn load_store<T: Real>(&self, prefix: &str, store: &mut ParamStore<T>) -> Result<()> {
        for p in store.iter_mut() {
            let key = format!("{prefix}{}", p.name);
            let Some(e) = self.get(&key) else {
                return bad(format!("missing entry {key}"));
            };
            if e.dims != p.value.shape().to_vec() {
                return bad(format!("{key}: shape {:?}, expected {:?}", e.dims, p.value.shape()));
            }
            p.value.data_mut().copy_from_slice(&e.values::<T>());
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.metadata)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = e.name.as_bytes();
            if name.len() > u16::MAX as usize || e.dims.len() > u8::MAX as usize {
                return bad(format!("entry {} cannot be encoded", e.name));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(e.dtype as u8);
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&e.bytes);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4)? != MAGIC {
            return bad("not an AVCK file");
        }
        let version = c.u16()?;
        if version != VERSION {
            return bad(format!("unsupported version {version}"));
        }
        let meta_len = c.u32()? as usize;
        let metadata = serde_json::from_slice(c.take(meta_len)?)?;
        let count = c.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = c.u16()? as usize;
            let name = String::from_utf8(c.take(name_len)?.to_vec()).or_else(|_| bad("entry name is not UTF-8"))?;
            let dtype = match c.u8()? {
                0 => Dtype::F32,
                1 => Dtype::F64,
                t => return bad(format!("{name}: unknown dtype {t}")),
            };
            let rank = c.u8()? as usize;
            let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let bytes = c.take(n * dtype.width())?.to_vec();
            entries.push(Entry { name, dtype, dims, bytes });
        }
        if c.pos != buf.len() {
            return bad(format!("{} trailing bytes", buf.len() - c.pos));
        }
        Ok(Self { metadata, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ck = Checkpoint::new(serde_json::json!({"step": 3}));
        ck.push("a", vec![2, 3], &[0.1f32, -2.5, f32::MIN_POSITIVE, 7.0, 1e30, -0.0]);
        ck.push("b", vec![1], &[std::f64::consts::PI]);
        let back = Checkpoint::decode(&ck.encode().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.get("b").unwrap().values::<f64>(), vec![std::f64::consts::PI]);
        assert_eq!(back.get("a").unwrap().values::<f32>()[4], 1e30);
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("a", vec![4], &[1.0f32; 4]);
        let bytes = ck.encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::decode(&wrong).is_err());
    }
}
