//! File formats: 16-bit PCM WAV plus the small raw float containers used
//! for sub-bands (`AVSB`) and mel rasters (`AVML`).

pub mod raw;
pub mod wav;

pub use raw::{read_mel, read_subbands, write_mel, write_subbands};
pub use wav::{read_wav, read_wav_checked, write_wav, WavCheck};
