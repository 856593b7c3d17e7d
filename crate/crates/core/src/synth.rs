//! Seeded source-filter voices for self-contained experiments.
//!
//! Each speaker gets a pitch range, four formants, a glottal spectral tilt,
//! a resonance in the 4.5-7 kHz band and a fricative colour. Utterances are
//! strings of voiced, fricative and pause segments with per-syllable formant
//! and pitch variation. Everything is drawn from explicit seeds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;

/// RMS level utterances are normalized to (about -20 dBFS).
const TARGET_RMS: f64 = 0.1;
/// Standard deviation of the background noise floor.
const NOISE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceProfile {
    pub f0_hz: f64,
    pub formants_hz: [f64; 4],
    pub bandwidths_hz: [f64; 4],
    /// Bandwidth of the glottal lowpass; smaller means a steeper tilt.
    pub glottal_bw_hz: f64,
    pub high_resonance_hz: f64,
    pub high_bandwidth_hz: f64,
    /// Linear gain of the parallel high-band branch.
    pub high_gain: f64,
    pub fricative_hz: f64,
    pub fricative_bw_hz: f64,
    /// Fricative RMS relative to voiced RMS.
    pub fricative_level: f64,
}

impl VoiceProfile {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            f0_hz: rng.random_range(90.0..220.0),
            formants_hz: [
                rng.random_range(350.0..800.0),
                rng.random_range(1000.0..2100.0),
                rng.random_range(2300.0..3000.0),
                rng.random_range(3300.0..4000.0),
            ],
            bandwidths_hz: [
                rng.random_range(50.0..110.0),
                rng.random_range(70.0..140.0),
                rng.random_range(100.0..200.0),
                rng.random_range(150.0..300.0),
            ],
            glottal_bw_hz: rng.random_range(60.0..250.0),
            high_resonance_hz: rng.random_range(4500.0..7000.0),
            high_bandwidth_hz: rng.random_range(300.0..900.0),
            high_gain: rng.random_range(0.6..2.5),
            fricative_hz: rng.random_range(4000.0..7000.0),
            fricative_bw_hz: rng.random_range(800.0..2000.0),
            fricative_level: rng.random_range(0.2..0.5),
        }
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-pole resonator with unity gain at DC and time-varying coefficients.
#[derive(Debug, Clone, Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, rate: f64) -> f64 {
        let r = (-PI * bw / rate).exp();
        let b = 2.0 * r * (2.0 * PI * freq / rate).cos();
        let c = -r * r;
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Magnitude of a [`Resonator`] at its centre frequency.
fn peak_gain(freq: f64, bw: f64, rate: f64) -> f64 {
    let r = (-PI * bw / rate).exp();
    let (b, c) = (2.0 * r * (2.0 * PI * freq / rate).cos(), -r * r);
    let w = 2.0 * PI * freq / rate;
    let re = 1.0 - b * w.cos() - c * (2.0 * w).cos();
    let im = b * w.sin() + c * (2.0 * w).sin();
    (1.0 - b - c) / re.hypot(im)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Voiced { formant_scale: [f64; 4], f0_scale: f64 },
    Fricative,
    Pause,
}

fn draw_segment(rng: &mut impl Rng) -> (Segment, f64) {
    let u: f64 = rng.random();
    if u < 0.65 {
        let formant_scale = [
            rng.random_range(0.8..1.2),
            rng.random_range(0.85..1.15),
            rng.random_range(0.95..1.05),
            rng.random_range(0.97..1.03),
        ];
        (Segment::Voiced { formant_scale, f0_scale: rng.random_range(0.85..1.15) }, rng.random_range(0.10..0.25))
    } else if u < 0.85 {
        (Segment::Fricative, rng.random_range(0.06..0.15))
    } else {
        (Segment::Pause, rng.random_range(0.05..0.2))
    }
}

/// Synthesizes `duration_secs` of speech-like audio for `voice` at `rate_hz`.
pub fn synthesize(voice: &VoiceProfile, duration_secs: f64, rate_hz: u32, rng: &mut impl Rng) -> AudioBuffer {
    let rate = rate_hz as f64;
    let n = (duration_secs * rate).round() as usize;
    let nyq_guard = 0.45 * rate;

    // Segment plan.
    let mut plan = Vec::new();
    let mut covered = 0usize;
    while covered < n {
        let (seg, secs) = draw_segment(rng);
        let len = ((secs * rate) as usize).max(1);
        plan.push((seg, covered, len));
        covered += len;
    }

    let smooth = |tau_secs: f64| 1.0 - (-1.0 / (tau_secs * rate)).exp();
    let (k_formant, k_amp) = (smooth(0.015), smooth(0.005));
    let mut formants = voice.formants_hz;
    let mut f0 = voice.f0_hz;
    let (mut voiced_amp, mut fric_amp) = (0.0, 0.0);
    let mut phase = 0.0;
    let mut glottal = Resonator::default();
    let mut tract: [Resonator; 4] = Default::default();
    let mut high = Resonator::default();
    let mut fric = Resonator::default();
    let mut prev_source = 0.0;
    let mut out = vec![0.0; n];
    let mut fricative = vec![0.0; n];
    // raw stream energies while each source is on, for relative levels
    let (mut v_energy, mut v_count, mut f_energy, mut f_count) = (0.0, 0usize, 0.0, 0usize);

    let hb_freq = voice.high_resonance_hz.min(nyq_guard);
    let fr_freq = voice.fricative_hz.min(nyq_guard);
    let hb_norm = 1.0 / peak_gain(hb_freq, voice.high_bandwidth_hz, rate);
    let fr_norm = 1.0 / peak_gain(fr_freq, voice.fricative_bw_hz, rate);
    let mut seg_idx = 0;
    for (t, sample) in out.iter_mut().enumerate() {
        while seg_idx + 1 < plan.len() && t >= plan[seg_idx + 1].1 {
            seg_idx += 1;
        }
        let (seg, start, len) = plan[seg_idx];
        let (target_formants, target_f0, v_target, f_target) = match seg {
            Segment::Voiced { formant_scale, f0_scale } => {
                // slow declination across the segment
                let progress = (t - start) as f64 / len as f64;
                let mut f = voice.formants_hz;
                for (fi, s) in f.iter_mut().zip(formant_scale) {
                    *fi = (*fi * s).min(nyq_guard);
                }
                (f, voice.f0_hz * f0_scale * (1.0 - 0.08 * progress), 1.0, 0.0)
            }
            Segment::Fricative => (formants, f0, 0.0, voice.fricative_level),
            Segment::Pause => (formants, f0, 0.0, 0.0),
        };
        for (f, tf) in formants.iter_mut().zip(target_formants) {
            *f += k_formant * (tf - *f);
        }
        f0 += k_formant * (target_f0 - f0);
        voiced_amp += k_amp * (v_target - voiced_amp);
        fric_amp += k_amp * (f_target - fric_amp);

        // glottal pulse train with 1% jitter
        phase += f0 * (1.0 + 0.01 * gauss(rng)) / rate;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        let aspiration: f64 = 0.02 * gauss(rng);
        let g = glottal.step(pulse + aspiration, 0.0, voice.glottal_bw_hz, rate);
        // lip radiation
        let source = g - prev_source;
        prev_source = g;

        let mut v = source;
        for (res, (f, bw)) in tract.iter_mut().zip(formants.iter().zip(voice.bandwidths_hz)) {
            v = res.step(v, *f, bw, rate);
        }
        let h = hb_norm * high.step(source, hb_freq, voice.high_bandwidth_hz, rate);
        let noise = gauss(rng);
        let fr = fr_norm * fric.step(noise, fr_freq, voice.fricative_bw_hz, rate);

        let voiced = v + voice.high_gain * h;
        if voiced_amp > 0.5 {
            v_energy += voiced * voiced;
            v_count += 1;
        }
        if fric_amp > 0.5 * voice.fricative_level {
            f_energy += fr * fr;
            f_count += 1;
        }
        *sample = voiced_amp * voiced;
        fricative[t] = fric_amp * fr;
    }
    let v_rms = (v_energy / v_count.max(1) as f64).sqrt().max(1e-30);
    let f_rms = (f_energy / f_count.max(1) as f64).sqrt().max(1e-30);
    for (o, f) in out.iter_mut().zip(&fricative) {
        *o = *o / v_rms + f / f_rms;
    }

    // normalize the active part, then add the floor
    let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let active: Vec<f64> = out.iter().copied().filter(|v| v.abs() > 0.01 * max).collect();
    let rms = (active.iter().map(|v| v * v).sum::<f64>() / active.len().max(1) as f64).sqrt();
    let mut scale = if rms > 0.0 { TARGET_RMS / rms } else { 0.0 };
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
    if peak > 0.9 {
        scale *= 0.9 / peak;
    }
    for s in out.iter_mut() {
        *s = *s * scale + NOISE_FLOOR * gauss(rng);
    }
    AudioBuffer::new(out, rate_hz).expect("finite synthesis")
}

/// Shape of a synthetic corpus: per speaker one training utterance and a
/// number of short test utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    /// Utterances per speaker; the first is the training utterance.
    pub utterances_per_speaker: usize,
    pub train_secs: f64,
    pub test_secs: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { n_speakers: 10, utterances_per_speaker: 6, train_secs: 60.0, test_secs: 2.0, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub speaker_id: String,
    pub utterance_id: String,
    pub is_train: bool,
    pub voice: VoiceProfile,
    pub audio: AudioBuffer,
}

/// Utterance id, whether it is the training utterance, and its seed.
pub type PlannedUtterance = (String, bool, u64);

/// Per-speaker voices and per-utterance seeds drawn in a fixed order, so a
/// corpus can be regenerated utterance by utterance.
pub fn corpus_plan(spec: &CorpusSpec) -> Vec<(String, VoiceProfile, Vec<PlannedUtterance>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_speakers)
        .map(|s| {
            let voice = VoiceProfile::random(&mut rng);
            let spk = format!("spk{s:02}");
            let utts = (0..spec.utterances_per_speaker)
                .map(|u| (format!("{spk}_u{u:02}"), u == 0, rng.random::<u64>()))
                .collect();
            (spk, voice, utts)
        })
        .collect()
}

pub fn synthesize_planned(voice: &VoiceProfile, is_train: bool, seed: u64, spec: &CorpusSpec) -> AudioBuffer {
    let secs = if is_train { spec.train_secs } else { spec.test_secs };
    synthesize(voice, secs, 16000, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Generates the whole corpus in memory at 16 kHz.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<SynthUtterance> {
    corpus_plan(spec)
        .into_iter()
        .flat_map(|(spk, voice, utts)| {
            utts.into_iter().map(move |(utt, is_train, seed)| SynthUtterance {
                speaker_id: spk.clone(),
                utterance_id: utt,
                is_train,
                audio: synthesize_planned(&voice, is_train, seed, spec),
                voice: voice.clone(),
            })
        })
        .collect()
}
