//! Frame-level analysis: Hamming framing, linear prediction cepstra (LPCC),
//! mel-frequency cepstra (MELCEPST), voicing and band energy ratio.

pub mod lpc;
pub mod mfcc;
pub mod voicing;

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use lpc::{autocorrelation, cepstrum_to_lpc, levinson_durbin, lpc_to_cepstrum, LpcSolution};
pub use mfcc::{melcepst, MfccAnalyzer};
pub use voicing::{log_energy_ratio, voicing_degree};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::filters::preemphasize_slice;

/// Analysis framing. Defaults: 30 ms Hamming frames with 2/3 overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub overlap_fraction: f64,
    /// FFT size for MFCC; `None` picks the next power of two at or above the
    /// frame length (256 at 8 kHz, 512 at 16 kHz for 30 ms frames).
    #[serde(default)]
    pub fft_len: Option<usize>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { frame_len_ms: 30.0, overlap_fraction: 2.0 / 3.0, fft_len: None }
    }
}

impl FrameConfig {
    pub fn frame_len(&self, rate_hz: u32) -> usize {
        (self.frame_len_ms * rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, rate_hz: u32) -> usize {
        (self.frame_len(rate_hz) as f64 * (1.0 - self.overlap_fraction)).round() as usize
    }

    pub fn fft_len(&self, rate_hz: u32) -> usize {
        self.fft_len.unwrap_or_else(|| self.frame_len(rate_hz).next_power_of_two())
    }

    pub fn validate(&self, rate_hz: u32) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParameter(format!("overlap {} outside [0, 1)", self.overlap_fraction)));
        }
        let len = self.frame_len(rate_hz);
        if len < 2 {
            return Err(Error::InvalidParameter(format!("frame of {} ms is under two samples", self.frame_len_ms)));
        }
        if self.hop(rate_hz) < 1 {
            return Err(Error::InvalidParameter("frame hop rounds to zero samples".into()));
        }
        let fft = self.fft_len(rate_hz);
        if !fft.is_power_of_two() || fft < len {
            return Err(Error::InvalidParameter(format!("fft length {fft} must be a power of two >= {len}")));
        }
        Ok(())
    }

    /// Number of whole frames that fit in `n_samples`.
    pub fn frame_count(&self, n_samples: usize, rate_hz: u32) -> usize {
        let len = self.frame_len(rate_hz);
        if n_samples < len {
            0
        } else {
            1 + (n_samples - len) / self.hop(rate_hz)
        }
    }
}

/// `w[n] = 0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()).collect()
}

/// Unwindowed frames; frame `k` starts at `k * hop`.
pub fn frame_segments<'a>(samples: &'a [f64], len: usize, hop: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
    let count = if samples.len() < len { 0 } else { 1 + (samples.len() - len) / hop };
    (0..count).map(move |k| &samples[k * hop..k * hop + len])
}

/// Hamming-windowed frames of `buffer`. A buffer shorter than one frame
/// yields no frames.
pub fn frame_signal(buffer: &AudioBuffer, config: &FrameConfig) -> Vec<Vec<f64>> {
    let rate = buffer.sample_rate_hz();
    let len = config.frame_len(rate);
    if buffer.len() < len {
        log::warn!("buffer of {} samples is shorter than one {len}-sample frame", buffer.len());
        return Vec::new();
    }
    let window = hamming(len);
    frame_segments(buffer.samples(), len, config.hop(rate))
        .map(|seg| seg.iter().zip(&window).map(|(x, w)| x * w).collect())
        .collect()
}

/// LPC cepstrum of a windowed frame with predictor order equal to the
/// number of coefficients. Silent frames give zeros.
pub fn lpcc(frame: &[f64], n_ceps: usize) -> Vec<f64> {
    let r = autocorrelation(frame, n_ceps);
    lpcc_from_autocorrelation(&r, n_ceps)
}

fn lpcc_from_autocorrelation(r: &[f64], order: usize) -> Vec<f64> {
    if r[0] < voicing::ENERGY_FLOOR {
        return vec![0.0; order];
    }
    match levinson_durbin(&r[..=order], order) {
        Some(sol) => lpc_to_cepstrum(&sol.coeffs, order),
        None => vec![0.0; order],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Lpcc,
    Melcepst,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Lpcc => "lpcc",
            FeatureKind::Melcepst => "melcepst",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lpcc" => Ok(FeatureKind::Lpcc),
            "melcepst" | "mfcc" => Ok(FeatureKind::Melcepst),
            other => Err(Error::InvalidParameter(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Per-frame feature vectors of one dimension and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    kind: FeatureKind,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl FeatureSequence {
    pub fn new(kind: FeatureKind, dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::Dimension { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("non-finite feature value".into()));
            }
        }
        Ok(Self { kind, dim, vectors })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// One frame per row, `c1..cl` header.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.dim).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for v in &self.vectors {
            let row: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Extraction settings for speaker-verification features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame: FrameConfig,
    pub preemphasis: f64,
    /// Mel filter count; `None` uses the per-rate default. The count is
    /// raised to `dim + 1` whenever that is larger.
    #[serde(default)]
    pub mel_filters: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { frame: FrameConfig::default(), preemphasis: 0.95, mel_filters: None }
    }
}

impl FeatureConfig {
    pub fn mel_filter_count(&self, dim: usize, rate_hz: u32) -> usize {
        self.mel_filters.unwrap_or_else(|| mfcc::default_filter_count(rate_hz)).max(dim + 1)
    }

    /// Pre-emphasis, Hamming framing and per-frame analysis for several
    /// dimensions at once. Frames are shared, so this costs little more than
    /// the largest dimension alone.
    pub fn extract_many(&self, buffer: &AudioBuffer, kind: FeatureKind, dims: &[usize]) -> Result<Vec<FeatureSequence>> {
        let rate = buffer.sample_rate_hz();
        self.frame.validate(rate)?;
        if let Some(&bad) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::InvalidParameter(format!("feature dimension {bad}")));
        }
        let emphasized = AudioBuffer::from_parts(preemphasize_slice(buffer.samples(), self.preemphasis), rate);
        let frames = frame_signal(&emphasized, &self.frame);
        let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(frames.len()); dims.len()];

        match kind {
            FeatureKind::Lpcc => {
                let max_dim = dims.iter().copied().max().unwrap_or(0);
                if max_dim >= self.frame.frame_len(rate) {
                    return Err(Error::InvalidParameter(format!("LPC order {max_dim} exceeds the frame length")));
                }
                for frame in &frames {
                    let r = autocorrelation(frame, max_dim);
                    for (slot, &d) in out.iter_mut().zip(dims) {
                        slot.push(lpcc_from_autocorrelation(&r[..=d], d));
                    }
                }
            }
            FeatureKind::Melcepst => {
                let fft_len = self.frame.fft_len(rate);
                for (slot, &d) in out.iter_mut().zip(dims) {
                    let analyzer = MfccAnalyzer::new(fft_len, self.mel_filter_count(d, rate), rate);
                    slot.extend(frames.iter().map(|f| analyzer.coefficients(f, d)));
                }
            }
        }
        out.into_iter().zip(dims).map(|(vectors, &d)| FeatureSequence::new(kind, d, vectors)).collect()
    }

    pub fn extract(&self, buffer: &AudioBuffer, kind: FeatureKind, dim: usize) -> Result<FeatureSequence> {
        Ok(self.extract_many(buffer, kind, &[dim])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_geometry() {
        let c = FrameConfig::default();
        assert_eq!((c.frame_len(8000), c.hop(8000), c.fft_len(8000)), (240, 80, 256));
        assert_eq!((c.frame_len(16000), c.hop(16000), c.fft_len(16000)), (480, 160, 512));
        assert!(c.validate(8000).is_ok());
        let bad = FrameConfig { fft_len: Some(128), ..c };
        assert!(bad.validate(8000).is_err());
    }

    #[test]
    fn frame_signal_counts_and_windows() {
        let c = FrameConfig::default();
        let exact = AudioBuffer::new(vec![1.0; 240], 8000).unwrap();
        let frames = frame_signal(&exact, &c);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0], hamming(240));

        let short = AudioBuffer::new(vec![1.0; 239], 8000).unwrap();
        assert!(frame_signal(&short, &c).is_empty());

        let longer = AudioBuffer::new((0..1000).map(|n| n as f64).collect(), 8000).unwrap();
        let frames = frame_signal(&longer, &c);
        assert_eq!(frames.len(), 1 + (1000 - 240) / 80);
        assert_eq!(frames.len(), c.frame_count(1000, 8000));
        let w = hamming(240);
        assert_eq!(frames[2][5], 165.0 * w[5]);
    }

    #[test]
    fn hamming_endpoints() {
        let w = hamming(5);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[2] - 1.0).abs() < 1e-15);
        assert!((w[4] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn extraction_is_deterministic_and_shaped() {
        let samples: Vec<f64> = (0..4000).map(|n| (0.05 * n as f64).sin() * (0.001 * n as f64).cos()).collect();
        let buf = AudioBuffer::new(samples, 8000).unwrap();
        let cfg = FeatureConfig::default();
        for kind in [FeatureKind::Lpcc, FeatureKind::Melcepst] {
            let a = cfg.extract_many(&buf, kind, &[4, 12, 27]).unwrap();
            let b = cfg.extract_many(&buf, kind, &[4, 12, 27]).unwrap();
            assert_eq!(a, b);
            assert_eq!(a[2].dim(), 27);
            assert_eq!(a[0].len(), cfg.frame.frame_count(4000, 8000));
            let single = cfg.extract(&buf, kind, 12).unwrap();
            assert_eq!(single, a[1]);
        }
    }

    #[test]
    fn silent_frames_give_zero_lpcc() {
        assert_eq!(lpcc(&[0.0; 240], 12), vec![0.0; 12]);
    }

    #[test]
    fn feature_kind_parsing() {
        assert_eq!("LPCC".parse::<FeatureKind>().unwrap(), FeatureKind::Lpcc);
        assert_eq!("mfcc".parse::<FeatureKind>().unwrap(), FeatureKind::Melcepst);
        assert!("plp".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn csv_export() {
        let s = FeatureSequence::new(FeatureKind::Lpcc, 2, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().next(), Some("c1,c2"));
        assert_eq!(csv.lines().count(), 3);
        assert!(FeatureSequence::new(FeatureKind::Lpcc, 2, vec![vec![1.0]]).is_err());
    }
}
