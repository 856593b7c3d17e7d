//! Periodicity and band-energy measures for the bandwidth-extension
//! feature vectors.

/// Lag range searched for periodicity at 8 kHz: 20..=160 samples
/// (400 Hz down to 50 Hz).
pub const MIN_LAG: usize = 20;
pub const MAX_LAG: usize = 160;

/// Frames with less energy than this count as silent.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Guard added to both band energies in [`log_energy_ratio`].
pub const RATIO_EPSILON: f64 = 1e-10;

/// Degree of voicing in `[0, 1]`: the peak normalized cross-correlation
/// between the frame and its lagged copy, over pitch lags 20..=160 samples.
///
/// The upper lag is capped at half the frame so that every correlation
/// uses at least half of the samples; otherwise white noise regularly
/// produces spurious peaks at long lags.
pub fn voicing_degree(frame: &[f64]) -> f64 {
    let energy: f64 = frame.iter().map(|v| v * v).sum();
    if energy < ENERGY_FLOOR {
        return 0.0;
    }
    let max_lag = MAX_LAG.min(frame.len() / 2);
    let mut best = 0.0f64;
    for lag in MIN_LAG..=max_lag {
        let (a, b) = (&frame[..frame.len() - lag], &frame[lag..]);
        let cross: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let ea: f64 = a.iter().map(|v| v * v).sum();
        let eb: f64 = b.iter().map(|v| v * v).sum();
        let denom = (ea * eb).sqrt();
        if denom > ENERGY_FLOOR {
            best = best.max(cross / denom);
        }
    }
    best.clamp(0.0, 1.0)
}

/// `10 log10((E_high + eps) / (E_nb + eps))` in dB.
pub fn log_energy_ratio(high: &[f64], narrow: &[f64]) -> f64 {
    let eh: f64 = high.iter().map(|v| v * v).sum();
    let en: f64 = narrow.iter().map(|v| v * v).sum();
    10.0 * ((eh + RATIO_EPSILON) / (en + RATIO_EPSILON)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn sine_is_voiced() {
        let frame: Vec<f64> = (0..240).map(|n| (2.0 * PI * 100.0 * n as f64 / 8000.0).sin()).collect();
        assert!(voicing_degree(&frame) >= 0.95);
    }

    #[test]
    fn silence_is_unvoiced() {
        assert_eq!(voicing_degree(&[0.0; 240]), 0.0);
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 500;
        let mut low = 0;
        for _ in 0..trials {
            // uniform noise is white; Gaussianity is irrelevant here
            let frame: Vec<f64> = (0..240).map(|_| rng.random_range(-1.0..1.0)).collect();
            if voicing_degree(&frame) <= 0.3 {
                low += 1;
            }
        }
        assert!(low as f64 / trials as f64 >= 0.98, "{low}/{trials}");
    }

    #[test]
    fn ratio_examples() {
        let a = [1.0, -1.0, 0.5];
        assert!(log_energy_ratio(&a, &a).abs() < 1e-12);
        let r = log_energy_ratio(&[0.0; 3], &a);
        assert!((r - 10.0 * (RATIO_EPSILON / (2.25 + RATIO_EPSILON)).log10()).abs() < 1e-9);
        assert!(r < -90.0);
        let doubled: Vec<f64> = a.iter().map(|v| v * 2f64.sqrt()).collect();
        assert!((log_energy_ratio(&doubled, &a) - 3.0103).abs() < 1e-4);
    }
}
