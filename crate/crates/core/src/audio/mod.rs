//! Audio buffers, WAV files, A-law companding and corpus manifests.

pub mod alaw;
pub mod manifest;
pub mod wav;

pub use manifest::{CorpusManifest, ManifestEntry, Role};
pub use wav::{read_wav, write_wav, BitDepth, WriteSummary};

use crate::error::{Error, Result};

/// Mono speech at an explicit sample rate. Amplitudes are nominally in
/// `[-1, 1]`; processing stages may overshoot slightly and the WAV writer
/// saturates.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidBuffer(format!("non-finite sample at index {pos}")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self { samples: vec![0.0; len], sample_rate_hz }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Same rate, new samples. Used by filters that preserve the rate.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { samples, sample_rate_hz: self.sample_rate_hz }
    }

    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples, sample_rate_hz }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(AudioBuffer::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
        let b = AudioBuffer::new(vec![0.5; 8000], 8000).unwrap();
        assert_eq!(b.duration_secs(), 1.0);
        assert_eq!(b.energy(), 2000.0);
    }
}
