//! Channel simulation and rate conversion.
//!
//! Every filter here is a linear-phase FIR with its group delay removed, so
//! outputs stay sample-aligned with inputs across all scenarios.

pub mod fir;

pub use fir::FirFilter;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Telephone band edges (-6 dB points) and design mask.
pub const POTS_LOW_HZ: f64 = 275.0;
pub const POTS_HIGH_HZ: f64 = 3400.0;
const POTS_TRANSITION_HZ: f64 = 250.0;
const POTS_ATTEN_DB: f64 = 50.0;

/// Lowest rate for which the 300-3400 Hz band is representable.
pub const POTS_MIN_RATE_HZ: u32 = 6800;

/// Rate-conversion filters: passband to 87.5 % of the narrow Nyquist,
/// stopband from the narrow Nyquist.
const RESAMPLE_ATTEN_DB: f64 = 60.0;

const SPLIT_TRANSITION_FRACTION: f64 = 0.025;
const SPLIT_ATTEN_DB: f64 = 60.0;

/// First-order pre-emphasis `y[n] = x[n] - alpha x[n-1]` with `x[-1] = 0`.
pub fn preemphasize_slice(x: &[f64], alpha: f64) -> Vec<f64> {
    assert!((0.0..1.0).contains(&alpha), "pre-emphasis coefficient must lie in [0, 1)");
    let mut prev = 0.0;
    x.iter()
        .map(|&s| {
            let y = s - alpha * prev;
            prev = s;
            y
        })
        .collect()
}

pub fn preemphasize(buffer: &AudioBuffer, alpha: f64) -> AudioBuffer {
    buffer.with_samples(preemphasize_slice(buffer.samples(), alpha))
}

/// The telephone-channel bandpass designed for `rate_hz`.
pub fn potsband_filter(rate_hz: u32) -> Result<FirFilter> {
    if rate_hz < POTS_MIN_RATE_HZ {
        return Err(Error::SampleRate {
            rate: rate_hz,
            reason: format!("telephone band needs at least {POTS_MIN_RATE_HZ} Hz"),
        });
    }
    let rate = rate_hz as f64;
    let high = POTS_HIGH_HZ.min(rate / 2.0 - POTS_TRANSITION_HZ / 2.0);
    Ok(FirFilter::bandpass(POTS_LOW_HZ, high, POTS_TRANSITION_HZ, POTS_ATTEN_DB, rate))
}

/// Band-limits speech to the 300-3400 Hz telephone channel.
pub fn potsband(buffer: &AudioBuffer) -> Result<AudioBuffer> {
    let filter = potsband_filter(buffer.sample_rate_hz())?;
    Ok(buffer.with_samples(filter.apply(buffer.samples())))
}

/// Anti-imaging lowpass for 2x interpolation from `rate_hz`, running at
/// `2 * rate_hz` with gain 2.
pub fn interpolation_filter(rate_hz: u32) -> FirFilter {
    let nyq = rate_hz as f64 / 2.0;
    FirFilter::lowpass(0.9375 * nyq, 0.125 * nyq, RESAMPLE_ATTEN_DB, 2.0 * rate_hz as f64, 2.0)
}

/// Anti-aliasing lowpass for 2x decimation from `rate_hz`.
pub fn decimation_filter(rate_hz: u32) -> FirFilter {
    let nyq = rate_hz as f64 / 4.0;
    FirFilter::lowpass(0.9375 * nyq, 0.125 * nyq, RESAMPLE_ATTEN_DB, rate_hz as f64, 1.0)
}

/// Zero insertion without any filtering: `y[2n] = x[n]`, `y[2n+1] = 0`.
/// The output spectrum is the input spectrum plus its mirror image about
/// the original Nyquist frequency.
pub fn spectral_fold_2x(buffer: &AudioBuffer) -> AudioBuffer {
    let mut out = vec![0.0; 2 * buffer.len()];
    for (i, &s) in buffer.samples().iter().enumerate() {
        out[2 * i] = s;
    }
    AudioBuffer::from_parts(out, 2 * buffer.sample_rate_hz())
}

/// Doubles the sample rate: zero insertion followed by the interpolation
/// lowpass. Amplitude is preserved in the original band.
pub fn upsample_2x_interp(buffer: &AudioBuffer) -> AudioBuffer {
    let folded = spectral_fold_2x(buffer);
    let filter = interpolation_filter(buffer.sample_rate_hz());
    folded.with_samples(filter.apply(folded.samples()))
}

/// Halves the sample rate after anti-alias filtering. Output sample `m`
/// is aligned with input sample `2m`.
pub fn downsample_2x(buffer: &AudioBuffer) -> Result<AudioBuffer> {
    let rate = buffer.sample_rate_hz();
    if !rate.is_multiple_of(2) {
        return Err(Error::SampleRate { rate, reason: "odd rate cannot be halved".into() });
    }
    let filtered = decimation_filter(rate).apply(buffer.samples());
    let out = filtered.into_iter().step_by(2).collect();
    Ok(AudioBuffer::from_parts(out, rate / 2))
}

/// Half-band split of 16 kHz speech.
#[derive(Debug, Clone)]
pub struct BandSplit {
    /// 0-4 kHz content at 8 kHz.
    pub low: AudioBuffer,
    /// 4-8 kHz content mirrored down to 0-4 kHz at 8 kHz (8 kHz maps to DC).
    pub high_baseband: AudioBuffer,
}

pub fn band_split_filter(rate_hz: u32) -> FirFilter {
    let rate = rate_hz as f64;
    FirFilter::lowpass(rate / 4.0, SPLIT_TRANSITION_FRACTION * rate, SPLIT_ATTEN_DB, rate, 1.0)
}

/// Splits wideband speech into critically sampled low and high bands. Both
/// outputs are scaled by `sqrt(2)` so that their energies add up to the
/// input energy.
pub fn band_split(buffer: &AudioBuffer) -> Result<BandSplit> {
    if buffer.sample_rate_hz() != 16000 {
        return Err(Error::SampleRate { rate: buffer.sample_rate_hz(), reason: "band split expects 16000 Hz".into() });
    }
    Ok(band_split_samples(buffer.samples()))
}

pub(crate) fn band_split_samples(x: &[f64]) -> BandSplit {
    let filter = band_split_filter(16000);
    let gain = std::f64::consts::SQRT_2;
    let decimate = |v: Vec<f64>| -> Vec<f64> { v.into_iter().step_by(2).map(|s| s * gain).collect() };

    let low = decimate(filter.apply(x));
    let modulated: Vec<f64> = x.iter().enumerate().map(|(n, &s)| if n % 2 == 0 { s } else { -s }).collect();
    let high = decimate(filter.apply(&modulated));
    BandSplit { low: AudioBuffer::from_parts(low, 8000), high_baseband: AudioBuffer::from_parts(high, 8000) }
}
