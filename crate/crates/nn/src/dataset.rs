//! Directory of training clips with format validation.

use std::path::{Path, PathBuf};

use avocodo_core::io::{read_wav_checked, WavCheck};
use avocodo_core::{MelExtractor, MelSpectrogram, Real, Waveform};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub items: Vec<(PathBuf, Waveform<T>)>,
    /// Files that failed validation, with the reason.
    pub rejected: Vec<(PathBuf, String)>,
}

/// Indexes every `.wav` file of `dir` in name order.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let mut items = Vec::new();
    let mut rejected = Vec::new();
    for path in paths {
        match read_wav_checked::<T>(&path) {
            Ok(WavCheck::Accepted(w)) if !w.is_empty() => items.push((path, w)),
            Ok(WavCheck::Accepted(_)) => rejected.push((path, "no samples".into())),
            Ok(WavCheck::Rejected(why)) => rejected.push((path, why)),
            Err(e) => rejected.push((path, e.to_string())),
        }
    }
    if items.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable 16-bit mono clips in {} ({} rejected)",
            dir.display(),
            rejected.len()
        )));
    }
    Ok(Dataset { items, rejected })
}

impl<T: Real> Dataset<T> {
    pub fn from_waveforms(waves: Vec<Waveform<T>>) -> Result<Self> {
        if waves.is_empty() {
            return Err(Error::Dataset("no clips".into()));
        }
        let items = waves.into_iter().enumerate().map(|(i, w)| (PathBuf::from(format!("clip{i}")), w)).collect();
        Ok(Self { items, rejected: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Uniformly chosen clip, then a random window of it.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        segment: usize,
        extractor: &MelExtractor<T>,
        rng: &mut R,
    ) -> Result<(Waveform<T>, MelSpectrogram<T>)> {
        let i = rng.gen_range(0..self.items.len());
        Ok(avocodo_core::features::random_segment(&self.items[i].1, segment, extractor, rng)?)
    }
}
