//! Linear prediction: autocorrelation, Levinson-Durbin, and the
//! predictor/cepstrum recursions.
//!
//! Predictor convention throughout: `x[n] ~ sum_{k=1..p} a[k] x[n-k]`, so the
//! inverse filter is `A(z) = 1 - sum a[k] z^-k`.

/// `r[k] = sum_n x[n] x[n+k]` for `k = 0..=max_lag`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    assert!(max_lag < frame.len().max(1), "max_lag must be below the frame length");
    (0..=max_lag)
        .map(|k| frame[..frame.len() - k].iter().zip(&frame[k..]).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpcSolution {
    /// Predictor coefficients `a[1..=p]`.
    pub coeffs: Vec<f64>,
    /// Residual energy after each order, `errors[m]` for order `m`
    /// (`errors[0] = r[0]`).
    pub errors: Vec<f64>,
    pub reflection: Vec<f64>,
    /// True when `r[0]` had to be inflated to keep every reflection
    /// coefficient inside the unit circle.
    pub regularized: bool,
}

impl LpcSolution {
    pub fn residual_energy(&self) -> f64 {
        *self.errors.last().expect("errors holds at least r[0]")
    }
}

fn levinson_once(r: &[f64], order: usize) -> Option<LpcSolution> {
    let mut a = vec![0.0; order];
    let mut tmp = vec![0.0; order];
    let mut errors = Vec::with_capacity(order + 1);
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    errors.push(err);
    for m in 0..order {
        let mut acc = r[m + 1];
        for j in 0..m {
            acc -= a[j] * r[m - j];
        }
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return None;
        }
        tmp[..m].copy_from_slice(&a[..m]);
        for j in 0..m {
            a[j] = tmp[j] - k * tmp[m - 1 - j];
        }
        a[m] = k;
        err *= 1.0 - k * k;
        errors.push(err);
        reflection.push(k);
    }
    Some(LpcSolution { coeffs: a, errors, reflection, regularized: false })
}

/// Solves the Toeplitz normal equations `sum_j a[j] r[|i-j|] = r[i]`.
///
/// When a reflection coefficient reaches the unit circle, `r[0]` is scaled
/// up by `1 + 1e-9` (growing tenfold per retry) and the solve is repeated.
/// Returns `None` when `r[0]` is not positive or the lags are not finite.
pub fn levinson_durbin(r: &[f64], order: usize) -> Option<LpcSolution> {
    assert!(r.len() > order, "need order + 1 autocorrelation lags");
    if !(r[0] > 0.0) || r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(sol) = levinson_once(r, order) {
        return Some(sol);
    }
    let mut lags = r[..=order].to_vec();
    let mut eps = 1e-9;
    while eps < 1.0 {
        lags[0] = r[0] * (1.0 + eps);
        if let Some(mut sol) = levinson_once(&lags, order) {
            log::debug!("levinson-durbin regularized with r0 scale 1 + {eps:e}");
            sol.regularized = true;
            return Some(sol);
        }
        eps *= 10.0;
    }
    None
}

/// Cepstrum of the all-pole model `1/A(z)`:
/// `c[n] = a[n] + sum_{k=1}^{n-1} (k/n) c[k] a[n-k]`, with `a[n] = 0` past the
/// model order. Returns `c[1..=n_ceps]`.
pub fn lpc_to_cepstrum(a: &[f64], n_ceps: usize) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; n_ceps];
    for n in 1..=n_ceps {
        let mut acc = if n <= p { a[n - 1] } else { 0.0 };
        for k in 1..n {
            let idx = n - k;
            if idx <= p {
                acc += (k as f64 / n as f64) * c[k - 1] * a[idx - 1];
            }
        }
        c[n - 1] = acc;
    }
    c
}

/// Inverse of [`lpc_to_cepstrum`] truncated to `order` predictor taps:
/// `a[n] = c[n] - sum_{k=1}^{n-1} (k/n) c[k] a[n-k]`.
pub fn cepstrum_to_lpc(c: &[f64], order: usize) -> Vec<f64> {
    let mut a = vec![0.0; order];
    for n in 1..=order {
        let mut acc = c.get(n - 1).copied().unwrap_or(0.0);
        for k in 1..n {
            acc -= (k as f64 / n as f64) * c.get(k - 1).copied().unwrap_or(0.0) * a[n - k - 1];
        }
        a[n - 1] = acc;
    }
    a
}

/// Step-down recursion from predictor to reflection coefficients. `None`
/// if the predictor is unstable (some `|k| >= 1`).
pub fn lpc_to_reflection(a: &[f64]) -> Option<Vec<f64>> {
    let mut cur = a.to_vec();
    let mut ks = vec![0.0; a.len()];
    for m in (0..a.len()).rev() {
        let k = cur[m];
        if !k.is_finite() || k.abs() >= 1.0 {
            return None;
        }
        ks[m] = k;
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (0..m).map(|j| (cur[j] + k * cur[m - 1 - j]) / denom).collect();
        cur.truncate(m);
        cur.copy_from_slice(&prev);
    }
    Some(ks)
}

/// Scales `a[k]` by `gamma^k` until the predictor is stable. Falls back to
/// an empty (flat) predictor if that never happens.
pub fn stabilize(a: &[f64]) -> Vec<f64> {
    let mut cur = a.to_vec();
    for _ in 0..60 {
        if lpc_to_reflection(&cur).is_some() {
            return cur;
        }
        let mut g = 1.0;
        for v in cur.iter_mut() {
            g *= 0.95;
            *v *= g;
        }
    }
    vec![0.0; a.len()]
}

/// Prediction residual `e[n] = x[n] - sum a[k] x[n-k]` (zero history).
pub fn inverse_filter(a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let mut e = x[n];
            for (k, ak) in a.iter().enumerate() {
                if n > k {
                    e -= ak * x[n - k - 1];
                }
            }
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorrelation_examples() {
        assert_eq!(autocorrelation(&[1.0, 0.0, 0.0, 0.0], 3), vec![1.0, 0.0, 0.0, 0.0]);
        let ones = vec![1.0; 10];
        assert_eq!(autocorrelation(&ones, 4), vec![10.0, 9.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn levinson_examples() {
        let s = levinson_durbin(&[1.0, 0.5], 1).unwrap();
        assert_eq!(s.coeffs, vec![0.5]);
        assert_eq!(s.residual_energy(), 0.75);
        assert!(!s.regularized);

        let s = levinson_durbin(&[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(s.coeffs, vec![0.0, 0.0]);
        assert_eq!(s.residual_energy(), 1.0);

        assert!(levinson_durbin(&[0.0, 0.0], 1).is_none());
    }

    #[test]
    fn levinson_regularizes_singular_lags() {
        // a pure sinusoid has a rank-2 autocorrelation matrix
        let x: Vec<f64> = (0..400).map(|n| (0.3 * n as f64).cos()).collect();
        let mut r = autocorrelation(&x, 6);
        // make it exactly periodic-singular: r[k] = cos(0.3 k)
        for (k, v) in r.iter_mut().enumerate() {
            *v = (0.3 * k as f64).cos();
        }
        let s = levinson_durbin(&r, 6).unwrap();
        assert!(s.regularized);
        assert!(s.reflection.iter().all(|k| k.abs() < 1.0));
        assert!(s.coeffs.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn cepstrum_recursion_examples() {
        let c = lpc_to_cepstrum(&[0.5], 3);
        assert_eq!(c[0], 0.5);
        assert_eq!(c[1], 0.125);
        // c3 = (1/3) c1 a2 + (2/3) c2 a1 with a2 = 0
        assert!((c[2] - (2.0 / 3.0) * 0.125 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn cepstrum_inverse_recovers_predictor() {
        let a = [0.9, -0.4, 0.2, 0.05];
        let c = lpc_to_cepstrum(&a, 4);
        let back = cepstrum_to_lpc(&c, 4);
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_round_trip_and_stability() {
        let r = [2.0, 1.2, 0.5, 0.1];
        let s = levinson_durbin(&r, 3).unwrap();
        let ks = lpc_to_reflection(&s.coeffs).unwrap();
        for (x, y) in ks.iter().zip(&s.reflection) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(lpc_to_reflection(&[2.5]).is_none());
        let fixed = stabilize(&[1.2, 0.5]);
        assert!(lpc_to_reflection(&fixed).is_some());
    }

    #[test]
    fn inverse_filter_whitens_ar1() {
        let mut x = vec![0.0; 50];
        x[0] = 1.0;
        for n in 1..50 {
            x[n] = 0.8 * x[n - 1];
        }
        let e = inverse_filter(&[0.8], &x);
        assert!((e[0] - 1.0).abs() < 1e-15);
        assert!(e[1..].iter().all(|v| v.abs() < 1e-12));
    }
}
