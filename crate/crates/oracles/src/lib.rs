//! Reference computations for the test suites.
//!
//! Everything here is deliberately computed a different way from the
//! library: dense matrix algebra instead of Cholesky or Levinson
//! recursions, FFTs instead of cepstral recursions, interval tables
//! instead of bit manipulation, exhaustive counting instead of sorted
//! sweeps. Plain slices only, so the oracles share no code with `bwsv`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// `B B^T / n + jitter I` for a random Gaussian-ish `B`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let b: DMatrix<f64> = DMatrix::from_fn(n, n + 3, |_, _| rng.random_range(-1.0..1.0));
    let mut a = &b * b.transpose() / n as f64;
    for i in 0..n {
        a[(i, i)] += 0.05;
    }
    to_rows(&a)
}

pub fn random_invertible(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    loop {
        let m: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) + if i == j { 1.5 } else { 0.0 });
        if m.determinant().abs() > 1e-3 {
            return to_rows(&m);
        }
    }
}

pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = dmatrix(a);
    let v = DVector::from_column_slice(b);
    m.lu().solve(&v).expect("non-singular system").iter().copied().collect()
}

pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    to_rows(&dmatrix(a).try_inverse().expect("invertible"))
}

/// Sphericity distance from explicit inverses and traces.
pub fn ahs_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, mb) = (dmatrix(a), dmatrix(b));
    let t1 = (&ma * mb.clone().try_inverse().unwrap()).trace();
    let t2 = (&mb * ma.try_inverse().unwrap()).trace();
    (t1 * t2).ln() - 2.0 * (a.len() as f64).ln()
}

/// `T A T^T`.
pub fn congruence(t: &[Vec<f64>], a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mt = dmatrix(t);
    to_rows(&(&mt * dmatrix(a) * mt.transpose()))
}

/// Symmetric Toeplitz matrix `R[i][j] = r[|i - j|]`, `p x p`.
pub fn toeplitz(r: &[f64], p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|i| (0..p).map(|j| r[i.abs_diff(j)]).collect()).collect()
}

/// Step-up recursion from reflection coefficients to a predictor
/// `A(z) = 1 - sum a_k z^-k`.
pub fn predictor_from_reflection(k: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::new();
    for &km in k {
        let prev = a.clone();
        a = (0..prev.len()).map(|j| prev[j] - km * prev[prev.len() - 1 - j]).collect();
        a.push(km);
    }
    a
}

/// Autocorrelation lags `0..=p` of the all-pole model `1/A(z)` computed by
/// running the filter on an impulse for `n` samples.
pub fn all_pole_autocorrelation(a: &[f64], p: usize, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    for t in 0..n {
        let mut v = if t == 0 { 1.0 } else { 0.0 };
        for (k, ak) in a.iter().enumerate() {
            if t > k {
                v += ak * h[t - k - 1];
            }
        }
        h[t] = v;
    }
    (0..=p).map(|lag| (lag..n).map(|t| h[t] * h[t - lag]).sum()).collect()
}

/// Predictor with prescribed poles inside radius 0.95, returned with the
/// poles themselves. Odd orders get one real pole.
pub fn predictor_from_poles(rng: &mut impl Rng, order: usize) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut poles = Vec::new();
    for _ in 0..order / 2 {
        let (r, th): (f64, f64) = (rng.random_range(0.1..0.95), rng.random_range(0.05..3.1));
        poles.push((r * th.cos(), r * th.sin()));
        poles.push((r * th.cos(), -r * th.sin()));
    }
    if order % 2 == 1 {
        poles.push((rng.random_range(-0.95..0.95), 0.0));
    }
    // expand prod (1 - p z^-1) with complex arithmetic
    let mut poly = vec![(1.0, 0.0)];
    for &(pr, pi) in &poles {
        let mut next = poly.clone();
        next.push((0.0, 0.0));
        for (j, &(cr, ci)) in poly.iter().enumerate() {
            next[j + 1].0 -= cr * pr - ci * pi;
            next[j + 1].1 -= cr * pi + ci * pr;
        }
        poly = next;
    }
    (poly[1..].iter().map(|c| -c.0).collect(), poles)
}

/// LPC cepstrum of `1/A(z)` via the FFT: twice the real cepstrum of the
/// log magnitude response (the model is minimum phase).
pub fn fft_lpc_cepstrum(a: &[f64], n_ceps: usize, n_fft: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    buf[0].re = 1.0;
    for (k, ak) in a.iter().enumerate() {
        buf[k + 1].re = -ak;
    }
    planner.plan_fft_forward(n_fft).process(&mut buf);
    let mut logmag: Vec<Complex<f64>> = buf.iter().map(|c| Complex::new(-c.norm().ln(), 0.0)).collect();
    planner.plan_fft_inverse(n_fft).process(&mut logmag);
    (1..=n_ceps).map(|n| 2.0 * logmag[n].re / n_fft as f64).collect()
}

/// G.711 A-law as interval tables: each code owns a half-open range of
/// 16-bit magnitudes and a reconstruction value at the range centre.
pub struct AlawTable {
    /// `(lower bound, step, code without sign)` per quantizer cell, ascending.
    cells: Vec<(i32, i32, u8)>,
}

impl Default for AlawTable {
    fn default() -> Self {
        Self::new()
    }
}

impl AlawTable {
    pub fn new() -> Self {
        let mut cells = Vec::with_capacity(128);
        // segment starts and step sizes in 16-bit units
        let segments = [(0, 16), (256, 16), (512, 32), (1024, 64), (2048, 128), (4096, 256), (8192, 512), (16384, 1024)];
        for (seg, &(start, step)) in segments.iter().enumerate() {
            for q in 0..16 {
                cells.push((start + q * step, step, ((seg as u8) << 4) | q as u8));
            }
        }
        Self { cells }
    }

    /// Negative inputs use the one's complement magnitude `-x - 1`.
    pub fn encode(&self, x: i16) -> u8 {
        let (sign, mag) = if x >= 0 { (0x80u8, x as i32) } else { (0x00u8, -(x as i32) - 1) };
        let cell = self.cells.iter().rev().find(|c| mag >= c.0).expect("covers zero");
        (sign | cell.2) ^ 0x55
    }

    pub fn decode(&self, code: u8) -> i16 {
        let raw = code ^ 0x55;
        let (lo, step, _) = self.cells[(raw & 0x7f) as usize];
        let mag = lo + step / 2;
        if raw & 0x80 != 0 {
            mag as i16
        } else {
            -(mag as i16)
        }
    }
}

/// `(P_miss, P_fa)` at threshold `t` by direct counting (accept `s >= t`).
pub fn count_errors(targets: &[f64], nontargets: &[f64], t: f64) -> (f64, f64) {
    let miss = targets.iter().filter(|&&s| s < t).count();
    let fa = nontargets.iter().filter(|&&s| s >= t).count();
    (miss as f64 / targets.len() as f64, fa as f64 / nontargets.len() as f64)
}

/// Every candidate threshold: each score, plus one above all scores.
pub fn candidate_thresholds(targets: &[f64], nontargets: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    t.push(f64::INFINITY);
    t
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Multivariate normal density from the explicit inverse and determinant.
pub fn mvn_density(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let c = dmatrix(cov);
    let d = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
    let q = (d.transpose() * c.clone().try_inverse().unwrap() * &d)[(0, 0)];
    let norm = ((2.0 * std::f64::consts::PI).powi(x.len() as i32) * c.determinant()).sqrt();
    (-0.5 * q).exp() / norm
}

/// `log sum_k w_k N(x; mu_k, S_k)` by summing densities directly.
pub fn mixture_log_density(x: &[f64], weights: &[f64], means: &[Vec<f64>], covs: &[Vec<Vec<f64>>]) -> f64 {
    weights.iter().zip(means).zip(covs).map(|((w, m), c)| w * mvn_density(x, m, c)).sum::<f64>().ln()
}

/// Joint-Gaussian regression `mu_y + S_yx S_xx^-1 (x - mu_x)` by dense solve.
pub fn gaussian_regression(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> Vec<f64> {
    let dx = x.len();
    let c = dmatrix(cov);
    let sxx = c.view((0, 0), (dx, dx)).into_owned();
    let syx = c.view((dx, 0), (c.nrows() - dx, dx)).into_owned();
    let d = DVector::from_iterator(dx, x.iter().zip(mean).map(|(a, b)| a - b));
    let shift = syx * sxx.lu().solve(&d).unwrap();
    mean[dx..].iter().zip(shift.iter()).map(|(m, s)| m + s).collect()
}

/// `E[y | x]` for a 2-D mixture by midpoint quadrature of `y p(x, y)` over
/// `[lo, hi]`.
pub fn quadrature_conditional_mean(x: f64, weights: &[f64], means: &[[f64; 2]], covs: &[[[f64; 2]; 2]], lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let y = lo + (i as f64 + 0.5) * h;
        let p: f64 = weights
            .iter()
            .zip(means)
            .zip(covs)
            .map(|((w, m), c)| w * mvn_density(&[x, y], m, &[c[0].to_vec(), c[1].to_vec()]))
            .sum();
        num += y * p;
        den += p;
    }
    num / den
}

/// Minimiser of `E[C(est - y)]`, `C(e) = e^2` for `e <= 0` and
/// `lambda^2 e^2` otherwise, for `y` a 1-D mixture: the expectation by
/// midpoint quadrature, the minimum by a coarse grid then ternary search.
pub fn quadrature_asymmetric_estimate(weights: &[f64], means: &[f64], vars: &[f64], lambda: f64) -> f64 {
    let lo = means.iter().zip(vars).map(|(m, v)| m - 10.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = means.iter().zip(vars).map(|(m, v)| m + 10.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let density: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let y = lo + (i as f64 + 0.5) * h;
            (y, weights.iter().zip(means).zip(vars).map(|((w, m), v)| w * normal_pdf(y, *m, *v)).sum::<f64>() * h)
        })
        .collect();
    let cost = |est: f64| -> f64 {
        density
            .iter()
            .map(|&(y, p)| {
                let e = est - y;
                p * if e > 0.0 { lambda * lambda * e * e } else { e * e }
            })
            .sum()
    };
    let grid: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
    let best = grid.iter().copied().min_by(|a, b| cost(*a).total_cmp(&cost(*b))).unwrap();
    let step = (hi - lo) / 400.0;
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if cost(m1) <= cost(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_up_first_order() {
        assert_eq!(predictor_from_reflection(&[0.5]), vec![0.5]);
        // two stages: a1 = k1 - k2 k1, a2 = k2
        let a = predictor_from_reflection(&[0.5, 0.25]);
        assert!((a[0] - 0.375).abs() < 1e-15 && (a[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fft_cepstrum_first_order() {
        // 1/(1 - a z^-1): c_n = a^n / n
        let c = fft_lpc_cepstrum(&[0.6], 4, 4096);
        for (n, v) in c.iter().enumerate() {
            let n = n as f64 + 1.0;
            assert!((v - 0.6f64.powf(n) / n).abs() < 1e-12);
        }
    }

    #[test]
    fn alaw_table_reference_points() {
        let t = AlawTable::new();
        assert_eq!(t.encode(0), 0xd5);
        assert_eq!(t.encode(-1), 0x55);
        assert_eq!(t.decode(0xd5), 8);
        assert_eq!(t.decode(0xaa), 32256);
    }
}
