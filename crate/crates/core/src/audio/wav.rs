//! Mono RIFF/WAVE files: 16-bit PCM (format tag 1) and 8-bit G.711 A-law
//! (format tag 6).

use std::fs;
use std::path::Path;

use super::{alaw, AudioBuffer};
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_ALAW: u16 = 6;

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BitDepth {
    Pcm16,
    Alaw8,
}

/// What `write_wav` had to do to fit the buffer into the target format.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteSummary {
    /// Samples outside `[-1, 1]` that were saturated.
    pub clipped: usize,
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let bytes = fs::read(path)?;
    parse_wav(&bytes)
}

/// Parses an in-memory WAV image.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE signature".into()));
    }

    let mut pos = 12;
    let mut format: Option<Format> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(Error::MalformedWav("fmt chunk too short".into()));
                }
                format = Some(Format {
                    tag: u16_at(bytes, body),
                    channels: u16_at(bytes, body + 2),
                    sample_rate: u32_at(bytes, body + 4),
                    bits: u16_at(bytes, body + 14),
                });
            }
            b"data" => {
                let fmt = format.ok_or_else(|| Error::MalformedWav("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body;
                if size > available {
                    return Err(Error::TruncatedData { declared: size, available });
                }
                return decode_samples(&fmt, &bytes[body..body + size]);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1);
    }
    Err(Error::MalformedWav("no data chunk".into()))
}

fn decode_samples(fmt: &Format, data: &[u8]) -> Result<AudioBuffer> {
    if fmt.channels != 1 {
        return Err(Error::UnsupportedEncoding(format!("{} channels (mono only)", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    let samples = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => {
            if !data.len().is_multiple_of(2) {
                return Err(Error::TruncatedData { declared: data.len() + 1, available: data.len() });
            }
            data.chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect()
        }
        (FORMAT_ALAW, 8) => data.iter().map(|&c| alaw::decode(c) as f64 / 32768.0).collect(),
        (tag, bits) => {
            return Err(Error::UnsupportedEncoding(format!("format tag {tag} with {bits} bits per sample")))
        }
    };
    Ok(AudioBuffer::from_parts(samples, fmt.sample_rate))
}

/// Rounds to the 16-bit grid, saturating out-of-range samples.
fn quantize(x: f64, clipped: &mut usize) -> i16 {
    if !(-1.0..=1.0).contains(&x) {
        *clipped += 1;
    }
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<WriteSummary> {
    let (bytes, summary) = encode_wav(buffer, depth);
    fs::write(path, bytes)?;
    Ok(summary)
}

/// Serializes a buffer to a WAV image.
pub fn encode_wav(buffer: &AudioBuffer, depth: BitDepth) -> (Vec<u8>, WriteSummary) {
    let mut summary = WriteSummary::default();
    let rate = buffer.sample_rate_hz();
    let n = buffer.len();

    let (tag, bits, payload): (u16, u16, Vec<u8>) = match depth {
        BitDepth::Pcm16 => {
            let mut p = Vec::with_capacity(2 * n);
            for &s in buffer.samples() {
                p.extend_from_slice(&quantize(s, &mut summary.clipped).to_le_bytes());
            }
            (FORMAT_PCM, 16, p)
        }
        BitDepth::Alaw8 => {
            let p = buffer.samples().iter().map(|&s| alaw::encode(quantize(s, &mut summary.clipped))).collect();
            (FORMAT_ALAW, 8, p)
        }
    };
    if summary.clipped > 0 {
        log::warn!("saturated {} of {} samples while writing wav", summary.clipped, n);
    }

    let block_align = bits / 8;
    // Non-PCM formats carry cbSize and a fact chunk.
    let fmt_size: u32 = if tag == FORMAT_PCM { 16 } else { 18 };
    let fact_size: u32 = if tag == FORMAT_PCM { 0 } else { 12 };
    let pad = payload.len() & 1;
    let riff_size = 4 + (8 + fmt_size) + fact_size + 8 + payload.len() as u32 + pad as u32;

    let mut out = Vec::with_capacity(riff_size as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_size.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&fmt_size.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if tag != FORMAT_PCM {
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    if pad == 1 {
        out.push(0);
    }
    (out, summary)
}
