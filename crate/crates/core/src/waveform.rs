use crate::scalar::Real;

/// Default sampling rate of every corpus this crate is tuned for.
pub const SAMPLE_RATE: u32 = 22_050;

/// Mono sample buffer with its sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    /// `amplitude · sin(2π f n / f_s)` for `len` samples.
    pub fn sine(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Self {
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
        let samples = (0..len).map(|n| T::lit(amplitude * (w * n as f64).sin())).collect();
        Self::new(samples, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square value in `f64`.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn cast<U: Real>(&self) -> Waveform<U> {
        Waveform::new(self.samples.iter().map(|v| U::lit(v.as_f64())).collect(), self.sample_rate)
    }
}
