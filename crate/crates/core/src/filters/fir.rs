//! Kaiser-window linear-phase FIR design and delay-compensated filtering.

use std::f64::consts::PI;
use std::fmt::Write as _;

/// Linear-phase FIR filter. Odd length, symmetric taps, integer group delay.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    nominal_delay_samples: usize,
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser's shape parameter for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Kaiser's length estimate for a transition width given as a fraction of
/// the sample rate, rounded up to an odd number of taps.
pub fn kaiser_length(atten_db: f64, transition: f64) -> usize {
    assert!(transition > 0.0 && transition < 0.5, "transition must be in (0, 0.5) cycles/sample");
    let n = ((atten_db - 7.95) / (14.36 * transition)).ceil().max(1.0) as usize + 1;
    n | 1
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn windowed_sinc(cutoff: f64, window: &[f64]) -> Vec<f64> {
    let mid = (window.len() - 1) as f64 / 2.0;
    window
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let t = n as f64 - mid;
            let ideal = if t == 0.0 { 2.0 * cutoff } else { (2.0 * PI * cutoff * t).sin() / (PI * t) };
            ideal * w
        })
        .collect()
}

impl FirFilter {
    /// Wraps odd-length taps; the nominal delay is the midpoint.
    pub fn new(taps: Vec<f64>) -> Self {
        assert!(taps.len() % 2 == 1, "linear-phase designs use an odd number of taps");
        assert!(taps.iter().all(|t| t.is_finite()), "taps must be finite");
        let nominal_delay_samples = (taps.len() - 1) / 2;
        Self { taps, nominal_delay_samples }
    }

    /// Lowpass with -6 dB point at `cutoff_hz`, the transition band centred
    /// on it, and passband gain `gain`.
    pub fn lowpass(cutoff_hz: f64, transition_hz: f64, atten_db: f64, rate_hz: f64, gain: f64) -> Self {
        let fc = cutoff_hz / rate_hz;
        assert!(fc > 0.0 && fc < 0.5, "cutoff must lie inside (0, Nyquist)");
        let len = kaiser_length(atten_db, transition_hz / rate_hz);
        let window = kaiser_window(len, kaiser_beta(atten_db));
        let taps = windowed_sinc(fc, &window).into_iter().map(|h| h * gain).collect();
        Self::new(taps)
    }

    /// Highpass by spectral inversion of the matching lowpass.
    pub fn highpass(cutoff_hz: f64, transition_hz: f64, atten_db: f64, rate_hz: f64) -> Self {
        let lp = Self::lowpass(cutoff_hz, transition_hz, atten_db, rate_hz, 1.0);
        let mut taps: Vec<f64> = lp.taps.iter().map(|h| -h).collect();
        taps[lp.nominal_delay_samples] += 1.0;
        Self::new(taps)
    }

    /// Bandpass as the difference of two equal-length lowpass designs.
    pub fn bandpass(low_hz: f64, high_hz: f64, transition_hz: f64, atten_db: f64, rate_hz: f64) -> Self {
        assert!(low_hz < high_hz, "band edges out of order");
        let len = kaiser_length(atten_db, transition_hz / rate_hz);
        let window = kaiser_window(len, kaiser_beta(atten_db));
        let hi = windowed_sinc(high_hz / rate_hz, &window);
        let lo = windowed_sinc(low_hz / rate_hz, &window);
        Self::new(hi.iter().zip(&lo).map(|(a, b)| a - b).collect())
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn nominal_delay_samples(&self) -> usize {
        self.nominal_delay_samples
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.taps.len();
        (0..n / 2).all(|i| (self.taps[i] - self.taps[n - 1 - i]).abs() <= 1e-15)
    }

    /// Convolves and removes the group delay: output sample `n` is aligned
    /// with input sample `n`, length is preserved, the signal is zero
    /// outside its support.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let len = x.len();
        let d = self.nominal_delay_samples as isize;
        let ntaps = self.taps.len() as isize;
        (0..len as isize)
            .map(|n| {
                // y[n] = sum_k h[k] x[n + d - k], restricted to valid x indices.
                let k_lo = (n + d - len as isize + 1).max(0);
                let k_hi = (n + d).min(ntaps - 1);
                let mut acc = 0.0;
                let mut k = k_lo;
                while k <= k_hi {
                    acc += self.taps[k as usize] * x[(n + d - k) as usize];
                    k += 1;
                }
                acc
            })
            .collect()
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, h) in self.taps.iter().enumerate() {
            re += h * (w * k as f64).cos();
            im -= h * (w * k as f64).sin();
        }
        re.hypot(im)
    }

    /// One tap per line: `index,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,tap\n");
        for (i, t) in self.taps.iter().enumerate() {
            let _ = writeln!(out, "{i},{t:e}");
        }
        out
    }
}
