//! Mel-frequency cepstra: power spectrum, triangular mel filterbank, log,
//! DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Filterbank energies are floored here before the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Conventional filter count for a sample rate: 20 at 8 kHz, 26 at 16 kHz.
pub fn default_filter_count(rate_hz: u32) -> usize {
    if rate_hz <= 8000 {
        20
    } else {
        26
    }
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
/// Each filter's weights sum to one, so a flat power spectrum gives equal
/// energies in every band.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    fft_len: usize,
    /// Per filter: first bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, fft_len: usize, rate_hz: u32) -> Self {
        assert!(n_filters > 0 && fft_len >= 2);
        let rate = rate_hz as f64;
        let n_bins = fft_len / 2 + 1;
        let top = hz_to_mel(rate / 2.0);
        let edges: Vec<f64> = (0..n_filters + 2).map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64)).collect();
        let bin_hz = rate / fft_len as f64;

        let filters = (0..n_filters)
            .map(|m| {
                let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut weights = Vec::new();
                let mut first = None;
                for b in 0..n_bins {
                    let f = b as f64 * bin_hz;
                    let w = if f > lo && f <= centre {
                        (f - lo) / (centre - lo)
                    } else if f > centre && f < hi {
                        (hi - f) / (hi - centre)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(b);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                match first {
                    Some(start) => {
                        let total: f64 = weights.iter().sum();
                        (start, weights.into_iter().map(|w| w / total).collect())
                    }
                    // Narrower than a bin: take the bin nearest the centre.
                    None => (((centre / bin_hz).round() as usize).min(n_bins - 1), vec![1.0]),
                }
            })
            .collect();
        Self { fft_len, filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Band energies from a one-sided power spectrum of `fft_len / 2 + 1` bins.
    pub fn energies(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(start, w)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II coefficients `first..first + count` of `x`.
pub fn dct2(x: &[f64], first: usize, count: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (first..first + count)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            scale * x.iter().enumerate().map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / m).cos()).sum::<f64>()
        })
        .collect()
}

/// Reusable MFCC analyser for one (rate, FFT size, filter count).
#[derive(Clone)]
pub struct MfccAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    bank: MelFilterbank,
}

impl std::fmt::Debug for MfccAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccAnalyzer").field("bank", &self.bank).finish()
    }
}

impl MfccAnalyzer {
    pub fn new(fft_len: usize, n_filters: usize, rate_hz: u32) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Self { fft, bank: MelFilterbank::new(n_filters, fft_len, rate_hz) }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// One-sided power spectrum of the zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.bank.fft_len;
        assert!(frame.len() <= n, "frame longer than the FFT");
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Floored natural-log filterbank energies.
    pub fn log_energies(&self, frame: &[f64]) -> Vec<f64> {
        self.bank.energies(&self.power_spectrum(frame)).into_iter().map(|e| e.max(LOG_FLOOR).ln()).collect()
    }

    /// Coefficients `1..=n_coeffs` (coefficient 0 excluded).
    pub fn coefficients(&self, frame: &[f64], n_coeffs: usize) -> Vec<f64> {
        assert!(n_coeffs < self.bank.len(), "need more filters than coefficients");
        dct2(&self.log_energies(frame), 1, n_coeffs)
    }
}

/// One-shot MFCC of a (windowed) frame.
pub fn melcepst(frame: &[f64], n_coeffs: usize, fft_len: usize, n_filters: usize, rate_hz: u32) -> Vec<f64> {
    MfccAnalyzer::new(fft_len, n_filters, rate_hz).coefficients(frame, n_coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_frame() -> Vec<f64> {
        (0..240).map(|n| (0.21 * n as f64).sin() + 0.3 * (1.37 * n as f64).cos() + 0.05 * ((n * n) as f64).sin()).collect()
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 4000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
    }

    #[test]
    fn deterministic() {
        let f = test_frame();
        assert_eq!(melcepst(&f, 12, 256, 20, 8000), melcepst(&f, 12, 256, 20, 8000));
    }

    #[test]
    fn gain_invariant_beyond_c0() {
        let f = test_frame();
        let a = MfccAnalyzer::new(256, 20, 8000);
        let base = a.coefficients(&f, 19);
        for g in [0.01, 0.5, 3.0, 100.0] {
            let scaled: Vec<f64> = f.iter().map(|v| v * g).collect();
            for (x, y) in base.iter().zip(a.coefficients(&scaled, 19)) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn flat_spectrum_gives_equal_bands() {
        for (fft_len, rate, nf) in [(256, 8000, 20), (512, 16000, 26), (512, 16000, 28)] {
            let bank = MelFilterbank::new(nf, fft_len, rate);
            let flat = vec![1.0; fft_len / 2 + 1];
            let e = bank.energies(&flat);
            for v in &e {
                assert!((v - 1.0).abs() < 1e-6);
            }
            let logs: Vec<f64> = e.iter().map(|v| v.ln()).collect();
            for c in dct2(&logs, 1, nf - 1) {
                assert!(c.abs() < 1e-6);
            }
        }
        // an impulse has a flat magnitude spectrum
        let a = MfccAnalyzer::new(256, 20, 8000);
        let mut imp = vec![0.0; 240];
        imp[0] = 1.0;
        assert!(a.coefficients(&imp, 19).iter().all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn silent_frame_is_floored() {
        let c = melcepst(&[0.0; 240], 12, 256, 20, 8000);
        assert!(c.iter().all(|v| v.is_finite() && v.abs() < 1e-9));
    }

    #[test]
    fn dct_matches_definition() {
        let x = [1.0, 2.0, 0.5, -1.0];
        let c = dct2(&x, 0, 4);
        let energy_in: f64 = x.iter().map(|v| v * v).sum();
        let energy_out: f64 = c.iter().map(|v| v * v).sum();
        assert!((energy_in - energy_out).abs() < 1e-12);
        assert!((c[0] - 2.5 / 2.0).abs() < 1e-12);
    }
}
