//! Statistical bandwidth extension from 8 kHz telephone speech to 16 kHz.
//!
//! A joint GMM over narrowband features (15 LPCC + voicing) and high-band
//! features (8 LPCC of the 4-8 kHz band mirrored to baseband + the
//! high/low log-energy ratio) drives the synthesis: the energy ratio is
//! estimated with an asymmetric cost that discourages over-estimation, the
//! envelope by the conditional mean, and a folded LPC residual supplies the
//! excitation.

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::{autocorrelation, hamming, levinson_durbin, lpcc, voicing_degree, FrameConfig};
use crate::features::lpc::{cepstrum_to_lpc, stabilize};
use crate::features::voicing::{log_energy_ratio, ENERGY_FLOOR};
use crate::filters::{band_split_samples, downsample_2x, potsband, preemphasize_slice, upsample_2x_interp, FirFilter};
use crate::gmm::{em_fit, EmConfig, FitReport, GaussianMixture, GmmFile, GmmRegressor};

pub const NB_RATE_HZ: u32 = 8000;
pub const WB_RATE_HZ: u32 = 16000;
pub const NB_CEPSTRA: usize = 15;
pub const HB_CEPSTRA: usize = 8;
/// Narrowband feature dimension: cepstra plus voicing.
pub const X_DIM: usize = NB_CEPSTRA + 1;
/// High-band feature dimension: cepstra plus log-energy ratio.
pub const Y_DIM: usize = HB_CEPSTRA + 1;
/// Index of the energy ratio within the high-band vector.
pub const RATIO_INDEX: usize = HB_CEPSTRA;

const PREEMPHASIS: f64 = 0.95;
/// Order of the whitening filter for the residual excitation.
const RESIDUAL_ORDER: usize = 15;
/// Frames quieter than this mean power (about -70 dBFS) carry no high band
/// and are left out of training.
pub const MIN_FRAME_POWER: f64 = 1e-7;
const HIGHPASS_CUTOFF_HZ: f64 = 3750.0;
const HIGHPASS_TRANSITION_HZ: f64 = 500.0;
const HIGHPASS_ATTEN_DB: f64 = 60.0;

/// 16-dimensional narrowband feature vector of one 8 kHz frame: order-15
/// LPCC of the pre-emphasized, Hamming-windowed frame, then the voicing
/// degree of the raw frame.
pub fn extract_nb_features(frame: &[f64]) -> Vec<f64> {
    let window = hamming(frame.len());
    let shaped: Vec<f64> = preemphasize_slice(frame, PREEMPHASIS).iter().zip(&window).map(|(x, w)| x * w).collect();
    let mut v = lpcc(&shaped, NB_CEPSTRA);
    v.push(voicing_degree(frame));
    v
}

/// High-band features from already split 8 kHz bands of one frame.
fn hb_features_from_bands(high: &[f64], low: &[f64]) -> Vec<f64> {
    let window = hamming(high.len());
    let wh: Vec<f64> = high.iter().zip(&window).map(|(x, w)| x * w).collect();
    let wl: Vec<f64> = low.iter().zip(&window).map(|(x, w)| x * w).collect();
    let mut v = lpcc(&wh, HB_CEPSTRA);
    v.push(log_energy_ratio(&wh, &wl));
    v
}

/// 9-dimensional high-band feature vector of one 16 kHz frame: the frame is
/// band-split, the mirrored high band gives order-8 LPCC, and the last
/// entry is the high/low log-energy ratio in dB.
pub fn extract_hb_features(wb_frame: &[f64]) -> Vec<f64> {
    let split = band_split_samples(wb_frame);
    hb_features_from_bands(split.high_baseband.samples(), split.low.samples())
}

fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Simulated telephone version of a 16 kHz signal: telephone bandpass then
/// decimation to 8 kHz. Sample `m` lines up with wideband sample `2m`.
pub fn narrowband_of(wb: &AudioBuffer) -> Result<AudioBuffer> {
    check_rate(wb, WB_RATE_HZ)?;
    downsample_2x(&potsband(wb)?)
}

fn check_rate(buffer: &AudioBuffer, rate: u32) -> Result<()> {
    if buffer.sample_rate_hz() != rate {
        return Err(Error::SampleRate { rate: buffer.sample_rate_hz(), reason: format!("expected {rate} Hz") });
    }
    Ok(())
}

/// Joint 25-dimensional training vectors of one wideband utterance. Frames
/// are 8 kHz frames shared by the narrowband signal and both split bands;
/// near-silent frames are dropped.
pub fn joint_vectors(wb: &AudioBuffer, frame: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    let nb = narrowband_of(wb)?;
    let split = band_split_samples(wb.samples());
    let (len, hop) = (frame.frame_len(NB_RATE_HZ), frame.hop(NB_RATE_HZ));
    let n = nb.len().min(split.low.len());
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= n {
        let seg = &nb.samples()[start..start + len];
        if mean_power(seg) >= MIN_FRAME_POWER {
            let mut v = extract_nb_features(seg);
            v.extend(hb_features_from_bands(&split.high_baseband.samples()[start..start + len], &split.low.samples()[start..start + len]));
            out.push(v);
        }
        start += hop;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Excitation {
    /// Spectral folding of the narrowband LPC residual.
    #[default]
    Residual,
    /// Spectral folding of the narrowband signal itself.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    /// Asymmetric-cost parameter used when the caller gives none.
    pub lambda: f64,
    /// One-pole gain smoothing constant; the smoothed gain never rises above
    /// the per-frame estimate.
    pub gain_smoothing: f64,
    pub excitation: Excitation,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self { lambda: 2.0, gain_smoothing: 0.7, excitation: Excitation::Residual }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BweTrainConfig {
    pub em: EmConfig,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub synthesis: SynthesisParams,
}

/// Trained extension model.
#[derive(Debug, Clone)]
pub struct BweModel {
    gmm: GaussianMixture,
    regressor: GmmRegressor,
    frame: FrameConfig,
    synthesis: SynthesisParams,
    training: Option<FitReport>,
}

impl PartialEq for BweModel {
    fn eq(&self, other: &Self) -> bool {
        self.gmm == other.gmm && self.frame == other.frame && self.synthesis == other.synthesis
    }
}

pub const BWE_FORMAT: &str = "bwsv-bwe";
pub const BWE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BweModelFile {
    format: String,
    version: u32,
    nb_rate_hz: u32,
    wb_rate_hz: u32,
    frame: FrameConfig,
    synthesis: SynthesisParams,
    gmm: GmmFile,
}

impl BweModel {
    pub fn new(gmm: GaussianMixture, frame: FrameConfig, synthesis: SynthesisParams, training: Option<FitReport>) -> Result<Self> {
        if gmm.dim() != X_DIM + Y_DIM || gmm.split() != Some(X_DIM) {
            return Err(Error::InvalidParameter(format!(
                "extension model needs a {X_DIM}+{Y_DIM} split mixture, got dim {} split {:?}",
                gmm.dim(),
                gmm.split()
            )));
        }
        frame.validate(NB_RATE_HZ)?;
        if !(synthesis.lambda >= 1.0) || !(0.0..1.0).contains(&synthesis.gain_smoothing) {
            return Err(Error::InvalidParameter("lambda must be >= 1 and gain smoothing in [0, 1)".into()));
        }
        let regressor = GmmRegressor::new(&gmm)?;
        Ok(Self { gmm, regressor, frame, synthesis, training })
    }

    pub fn gmm(&self) -> &GaussianMixture {
        &self.gmm
    }

    pub fn regressor(&self) -> &GmmRegressor {
        &self.regressor
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn synthesis(&self) -> &SynthesisParams {
        &self.synthesis
    }

    pub fn training(&self) -> Option<&FitReport> {
        self.training.as_ref()
    }

    pub fn to_json(&self) -> String {
        let file = BweModelFile {
            format: BWE_FORMAT.into(),
            version: BWE_VERSION,
            nb_rate_hz: NB_RATE_HZ,
            wb_rate_hz: WB_RATE_HZ,
            frame: self.frame,
            synthesis: self.synthesis,
            gmm: self.gmm.to_file(self.training.clone()),
        };
        serde_json::to_string_pretty(&file).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: BweModelFile = serde_json::from_str(text)?;
        if f.format != BWE_FORMAT || f.version != BWE_VERSION {
            return Err(Error::Format(format!("expected {BWE_FORMAT} v{BWE_VERSION}, found {} v{}", f.format, f.version)));
        }
        if (f.nb_rate_hz, f.wb_rate_hz) != (NB_RATE_HZ, WB_RATE_HZ) {
            return Err(Error::Format(format!("unsupported rate pair {} -> {}", f.nb_rate_hz, f.wb_rate_hz)));
        }
        let (gmm, training) = f.gmm.into_mixture()?;
        Self::new(gmm, f.frame, f.synthesis, training)
    }

    /// Estimated `(energy ratio in dB, envelope cepstra)` for one narrowband
    /// feature vector.
    pub fn estimate(&self, x: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
        let ratio = self.regressor.asymmetric_estimate(x, RATIO_INDEX, lambda)?;
        let mut env = self.regressor.conditional_mean(x)?;
        env.truncate(HB_CEPSTRA);
        Ok((ratio, env))
    }
}

/// Trains the joint model on wideband (16 kHz) utterances.
pub fn train_bwe_model(wideband: &[AudioBuffer], config: &BweTrainConfig) -> Result<BweModel> {
    config.frame.validate(NB_RATE_HZ)?;
    let mut data = Vec::new();
    for wb in wideband {
        data.extend(joint_vectors(wb, &config.frame)?);
    }
    if data.len() < 10 * config.em.k {
        return Err(Error::InsufficientData(format!(
            "{} usable frames for {} mixture components; need at least {}",
            data.len(),
            config.em.k,
            10 * config.em.k
        )));
    }
    log::info!("training extension model on {} frames, k={}", data.len(), config.em.k);
    let (gmm, report) = em_fit(&data, &config.em)?;
    BweModel::new(gmm.with_split(X_DIM)?, config.frame, config.synthesis, Some(report))
}

/// Per-frame record of the synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    /// Estimated high/narrow energy ratio in dB; `None` for silent frames.
    pub estimated_db: Option<f64>,
    /// Ratio actually applied after smoothing and neighbour limiting;
    /// `None` when the frame contributes nothing.
    pub applied_db: Option<f64>,
    /// Hamming-weighted mean power of the narrowband frame.
    pub nb_power: f64,
}

#[derive(Debug, Clone)]
pub struct Extension {
    pub output: AudioBuffer,
    /// Synthesized high band alone (the output minus the interpolated input).
    pub high_band: Vec<f64>,
    pub frames: Vec<FrameTrace>,
}

fn highpass() -> FirFilter {
    FirFilter::highpass(HIGHPASS_CUTOFF_HZ, HIGHPASS_TRANSITION_HZ, HIGHPASS_ATTEN_DB, WB_RATE_HZ as f64)
}

/// Periodic Hann window; shifted copies at half-length hops sum to one.
fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()).collect()
}

/// Index of the analysis frame whose centre is nearest to `pos`.
fn nearest_frame(pos: usize, centre0: usize, hop: usize, count: usize) -> usize {
    let k = ((pos as f64 - centre0 as f64) / hop as f64).round();
    (k.max(0.0) as usize).min(count - 1)
}

/// Extends 8 kHz speech to 16 kHz. The output is the interpolated input
/// plus a synthesized 4-8 kHz band; its length is exactly twice the input.
pub fn extend(nb: &AudioBuffer, model: &BweModel, lambda: f64) -> Result<Extension> {
    check_rate(nb, NB_RATE_HZ)?;
    if !(lambda >= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {lambda}")));
    }
    let base = upsample_2x_interp(nb);
    let x = nb.samples();
    let (len, hop) = (model.frame.frame_len(NB_RATE_HZ), model.frame.hop(NB_RATE_HZ));
    let count = model.frame.frame_count(x.len(), NB_RATE_HZ);
    if count == 0 {
        return Ok(Extension { high_band: vec![0.0; base.len()], output: base, frames: Vec::new() });
    }
    let window = hamming(len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    // Per-frame estimates and whitening filters.
    let mut frames = Vec::with_capacity(count);
    let mut envelopes = Vec::with_capacity(count);
    let mut whiteners = Vec::with_capacity(count);
    for k in 0..count {
        let seg = &x[k * hop..k * hop + len];
        let windowed: Vec<f64> = seg.iter().zip(&window).map(|(s, w)| s * w).collect();
        let nb_power = windowed.iter().map(|v| v * v).sum::<f64>() / window_power;
        if mean_power(seg) < MIN_FRAME_POWER {
            frames.push(FrameTrace { estimated_db: None, applied_db: None, nb_power });
            envelopes.push(vec![0.0; HB_CEPSTRA]);
            whiteners.push(vec![0.0; RESIDUAL_ORDER]);
            continue;
        }
        let (ratio, env) = model.estimate(&extract_nb_features(seg), lambda)?;
        frames.push(FrameTrace { estimated_db: Some(ratio), applied_db: None, nb_power });
        envelopes.push(stabilize(&cepstrum_to_lpc(&env, HB_CEPSTRA)));
        let r = autocorrelation(&windowed, RESIDUAL_ORDER);
        let a = if r[0] < ENERGY_FLOOR { None } else { levinson_durbin(&r, RESIDUAL_ORDER).map(|s| s.coeffs) };
        whiteners.push(a.unwrap_or_else(|| vec![0.0; RESIDUAL_ORDER]));
    }

    // Excitation at 8 kHz, each sample whitened by the nearest frame's predictor.
    let centre = len / 2;
    let excitation: Vec<f64> = match model.synthesis.excitation {
        Excitation::Raw => x.to_vec(),
        Excitation::Residual => (0..x.len())
            .map(|n| {
                let a = &whiteners[nearest_frame(n, centre, hop, count)];
                let mut e = x[n];
                for (i, ai) in a.iter().enumerate() {
                    if n > i {
                        e -= ai * x[n - i - 1];
                    }
                }
                e
            })
            .collect(),
    };

    // Fold to 16 kHz and shape with 1/A(z^2): the envelope was measured on
    // the high band mirrored about 4 kHz, which z^2 maps back into 4-8 kHz.
    let n16 = 2 * x.len();
    let mut shaped = vec![0.0; n16];
    let (centre16, hop16) = (2 * centre, 2 * hop);
    for t in 0..n16 {
        let input = if t % 2 == 0 { excitation[t / 2] } else { 0.0 };
        let a = &envelopes[nearest_frame(t, centre16, hop16, count)];
        let mut y = input;
        for (i, ai) in a.iter().enumerate() {
            let lag = 2 * (i + 1);
            if t >= lag {
                y += ai * shaped[t - lag];
            }
        }
        shaped[t] = y;
    }
    let hp = highpass();
    let band = hp.apply(&shaped);

    // Gain: match the Hann-weighted power of each synthesis frame to the
    // smoothed ratio times the narrowband frame power.
    let syn_len = 2 * hop16;
    let hann = periodic_hann(syn_len);
    let hann_power: f64 = hann.iter().map(|w| w * w).sum();
    let alpha = model.synthesis.gain_smoothing;
    let start_of = |k: usize| (centre16 + k * hop16) as isize - hop16 as isize;
    let in_range = |t: isize| (t >= 0 && (t as usize) < n16).then_some(t as usize);
    let mut smoothed: Option<f64> = None;
    let mut gains = vec![0.0; count];
    let mut seg_powers = vec![0.0; count];
    for (k, trace) in frames.iter().enumerate() {
        let Some(db) = trace.estimated_db else {
            smoothed = None;
            continue;
        };
        let ratio = 10f64.powf(db / 10.0);
        let r = match smoothed {
            Some(prev) => ratio.min(alpha * prev + (1.0 - alpha) * ratio),
            None => ratio,
        };
        smoothed = Some(r);
        let seg_power: f64 =
            (0..syn_len).filter_map(|i| in_range(start_of(k) + i as isize).map(|t| (hann[i] * band[t]).powi(2))).sum::<f64>() / hann_power;
        if seg_power > 0.0 && seg_power.is_finite() {
            gains[k] = (r * trace.nb_power / seg_power).sqrt();
            seg_powers[k] = seg_power;
        }
    }
    // Neighbouring windows overlap frame k, so none of them may use a larger
    // gain than frame k allows. With the window pair summing to one, every
    // output sample in frame k is then bounded by gain k times the band.
    let limited: Vec<f64> = (0..count)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(count - 1);
            gains[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut out = vec![0.0; n16];
    for (k, trace) in frames.iter_mut().enumerate() {
        if trace.estimated_db.is_none() || limited[k] <= 0.0 {
            continue;
        }
        trace.applied_db = Some(10.0 * (limited[k].powi(2) * seg_powers[k] / trace.nb_power).log10());
        for i in 0..syn_len {
            if let Some(t) = in_range(start_of(k) + i as isize) {
                out[t] += hann[i] * limited[k] * band[t];
            }
        }
    }
    // Gain changes spread a little energy below 4 kHz; filter once more.
    let high_band = hp.apply(&out);
    let samples: Vec<f64> = base.samples().iter().zip(&high_band).map(|(a, b)| a + b).collect();
    Ok(Extension { output: AudioBuffer::new(samples, WB_RATE_HZ)?, high_band, frames })
}
