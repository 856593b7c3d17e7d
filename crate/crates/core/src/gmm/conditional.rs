use super::{log_sum_exp, GaussianMixture, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

const GOLDEN_TOLERANCE: f64 = 1e-6;
const SEARCH_HALF_WIDTH_SIGMAS: f64 = 6.0;

/// Per-component regression of `y` on `x`, precomputed from a split mixture.
#[derive(Debug, Clone)]
struct Regression {
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    sxx: Cholesky,
    /// `S_yx S_xx^{-1}`, `D_y x D_x`.
    gain: Matrix,
    /// `S_yy - S_yx S_xx^{-1} S_xy`.
    cond_cov: Matrix,
    /// `log w_k - (D_x log 2pi + log det S_xx) / 2`
    log_norm: f64,
}

/// One component of the 1-D conditional mixture `p(y_d | x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalComponent {
    pub posterior: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Estimates the `y` block of a split mixture from the `x` block.
#[derive(Debug, Clone)]
pub struct GmmRegressor {
    dx: usize,
    dy: usize,
    parts: Vec<Regression>,
}

/// Factors `S_xx`, adding `1e-9 trace(S_xx) I` when the factorisation fails or
/// the pivots indicate a condition number beyond about 1e14.
fn factor_regularized(sxx: &Matrix, component: usize) -> Result<Cholesky> {
    let well_conditioned = |c: &Cholesky| {
        let l = c.factor();
        let diag: Vec<f64> = (0..c.dim()).map(|i| l[(i, i)]).collect();
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().copied().fold(0.0, f64::max);
        (lo / hi).powi(2) > 1e-14
    };
    if let Some(c) = Cholesky::new(sxx).filter(well_conditioned) {
        return Ok(c);
    }
    let mut reg = sxx.clone();
    reg.add_diagonal(1e-9 * sxx.trace());
    log::warn!("component {component}: ill-conditioned x-covariance regularized by 1e-9 trace");
    Cholesky::new(&reg).ok_or_else(|| Error::NotPositiveDefinite(format!("x-block covariance of component {component}")))
}

impl GmmRegressor {
    pub fn new(gmm: &GaussianMixture) -> Result<Self> {
        let dx = gmm.split().ok_or_else(|| Error::InvalidParameter("mixture has no x/y split".into()))?;
        let dim = gmm.dim();
        let dy = dim - dx;
        let xs: Vec<usize> = (0..dx).collect();
        let ys: Vec<usize> = (dx..dim).collect();
        let mut parts = Vec::with_capacity(gmm.n_components());
        for (k, c) in gmm.components().iter().enumerate() {
            let sxx = c.covariance.select(&xs, &xs);
            let syx = c.covariance.select(&ys, &xs);
            let syy = c.covariance.select(&ys, &ys);
            let chol = factor_regularized(&sxx, k)?;
            let mut gain = Matrix::zeros(dy, dx);
            for i in 0..dy {
                let row = chol.solve(syx.row(i));
                for (j, v) in row.into_iter().enumerate() {
                    gain[(i, j)] = v;
                }
            }
            let mut cond_cov = syy.clone();
            for i in 0..dy {
                for j in 0..dy {
                    let s: f64 = (0..dx).map(|t| gain[(i, t)] * syx[(j, t)]).sum();
                    cond_cov[(i, j)] -= s;
                }
            }
            cond_cov.symmetrize();
            parts.push(Regression {
                mean_x: c.mean[..dx].to_vec(),
                mean_y: c.mean[dx..].to_vec(),
                log_norm: c.weight.ln() - 0.5 * (dx as f64 * LN_2PI + chol.log_det()),
                sxx: chol,
                gain,
                cond_cov,
            });
        }
        Ok(Self { dx, dy, parts })
    }

    pub fn x_dim(&self) -> usize {
        self.dx
    }

    pub fn y_dim(&self) -> usize {
        self.dy
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dx {
            return Err(Error::Dimension { expected: self.dx, got: x.len() });
        }
        Ok(())
    }

    /// `h_k(x)`: component posteriors under the `x` marginal.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut d = vec![0.0; self.dx];
        let lp: Vec<f64> = self
            .parts
            .iter()
            .map(|p| {
                for ((di, xi), mi) in d.iter_mut().zip(x).zip(&p.mean_x) {
                    *di = xi - mi;
                }
                p.log_norm - 0.5 * p.sxx.mahalanobis_sq(&d)
            })
            .collect();
        let total = log_sum_exp(&lp);
        Ok(lp.iter().map(|v| (v - total).exp()).collect())
    }

    fn component_means(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.parts
            .iter()
            .map(|p| {
                let d: Vec<f64> = x.iter().zip(&p.mean_x).map(|(a, b)| a - b).collect();
                let shift = p.gain.matvec(&d);
                p.mean_y.iter().zip(shift).map(|(m, s)| m + s).collect()
            })
            .collect()
    }

    /// MMSE estimate `E[y | x]`.
    pub fn conditional_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.posteriors(x)?;
        let mut out = vec![0.0; self.dy];
        for (hk, m) in h.iter().zip(self.component_means(x)) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += hk * v;
            }
        }
        Ok(out)
    }

    /// The conditional distribution of `y[dim]` given `x` as a 1-D mixture.
    pub fn conditional_marginal(&self, x: &[f64], dim: usize) -> Result<Vec<ConditionalComponent>> {
        if dim >= self.dy {
            return Err(Error::InvalidParameter(format!("target dimension {dim} outside y block of size {}", self.dy)));
        }
        let h = self.posteriors(x)?;
        Ok(h.into_iter()
            .zip(self.component_means(x))
            .zip(&self.parts)
            .map(|((posterior, m), p)| ConditionalComponent { posterior, mean: m[dim], variance: p.cond_cov[(dim, dim)].max(0.0) })
            .collect())
    }

    /// Minimiser of the expected asymmetric quadratic cost
    /// `C(e) = e^2` for `e <= 0`, `lambda^2 e^2` for `e > 0`, with `e = est - y`,
    /// under the conditional distribution of `y[dim]`. Larger `lambda`
    /// penalises over-estimates more and pulls the estimate down.
    pub fn asymmetric_estimate(&self, x: &[f64], dim: usize, lambda: f64) -> Result<f64> {
        if !(lambda >= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {lambda}")));
        }
        let mix = self.conditional_marginal(x, dim)?;
        Ok(asymmetric_minimizer(&mix, lambda))
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[C(est - y)]` for `y` distributed as the given mixture.
pub(crate) fn expected_asymmetric_cost(mix: &[ConditionalComponent], est: f64, lambda: f64) -> f64 {
    let extra = lambda * lambda - 1.0;
    mix.iter()
        .map(|c| {
            let mu = est - c.mean;
            let s = c.variance.sqrt();
            let second = mu * mu + c.variance;
            let positive = if s > 0.0 {
                let z = mu / s;
                second * normal_cdf(z) + mu * s * normal_pdf(z)
            } else if mu > 0.0 {
                mu * mu
            } else {
                0.0
            };
            c.posterior * (second + extra * positive)
        })
        .sum()
}

fn asymmetric_minimizer(mix: &[ConditionalComponent], lambda: f64) -> f64 {
    let mean: f64 = mix.iter().map(|c| c.posterior * c.mean).sum();
    let second: f64 = mix.iter().map(|c| c.posterior * (c.variance + c.mean * c.mean)).sum();
    let var = second - mean * mean;
    if !(var > 1e-300) || !var.is_finite() {
        return mean;
    }
    let half = SEARCH_HALF_WIDTH_SIGMAS * var.sqrt();
    golden_section(|e| expected_asymmetric_cost(mix, e, lambda), mean - half, mean + half, GOLDEN_TOLERANCE)
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Component;

    fn joint(weight: f64, mean: [f64; 2], cov: [[f64; 2]; 2]) -> Component {
        Component { weight, mean: mean.to_vec(), covariance: Matrix::from_rows(&[cov[0].to_vec(), cov[1].to_vec()]).unwrap() }
    }

    #[test]
    fn single_gaussian_regresses_through_the_mean() {
        let g = GaussianMixture::new(vec![joint(1.0, [1.0, -2.0], [[2.0, 0.6], [0.6, 1.0]])], Some(1)).unwrap();
        let r = GmmRegressor::new(&g).unwrap();
        assert!((r.conditional_mean(&[1.0]).unwrap()[0] + 2.0).abs() < 1e-15);
        // slope S_yx / S_xx = 0.3
        assert!((r.conditional_mean(&[3.0]).unwrap()[0] - (-2.0 + 0.6)).abs() < 1e-14);
        let m = r.conditional_marginal(&[3.0], 0).unwrap();
        assert!((m[0].variance - (1.0 - 0.18)).abs() < 1e-14);
    }

    #[test]
    fn symmetric_cost_recovers_the_mean() {
        let g = GaussianMixture::new(
            vec![joint(0.4, [0.0, 1.0], [[1.0, 0.5], [0.5, 2.0]]), joint(0.6, [2.0, -1.0], [[0.5, -0.2], [-0.2, 0.3]])],
            Some(1),
        )
        .unwrap();
        let r = GmmRegressor::new(&g).unwrap();
        for x in [-1.0, 0.7, 1.5, 4.0] {
            let mean = r.conditional_mean(&[x]).unwrap()[0];
            let est = r.asymmetric_estimate(&[x], 0, 1.0).unwrap();
            assert!((mean - est).abs() < 1e-5, "{x}: {mean} vs {est}");
            let mut prev = est;
            for lambda in [2.0, 4.0, 8.0] {
                let e = r.asymmetric_estimate(&[x], 0, lambda).unwrap();
                assert!(e <= prev + 1e-9);
                prev = e;
            }
        }
    }

    #[test]
    fn asymmetric_cost_matches_quadrature() {
        let mix = [ConditionalComponent { posterior: 1.0, mean: 0.3, variance: 0.49 }];
        for (est, lambda) in [(0.0, 2.0), (0.5, 4.0), (-1.0, 3.0)] {
            let n = 200_000;
            let (lo, hi) = (0.3 - 10.0 * 0.7, 0.3 + 10.0 * 0.7);
            let h = (hi - lo) / n as f64;
            let mut q = 0.0;
            for i in 0..n {
                let y = lo + (i as f64 + 0.5) * h;
                let e: f64 = est - y;
                let cost = if e > 0.0 { lambda * lambda * e * e } else { e * e };
                q += cost * normal_pdf((y - 0.3) / 0.7) / 0.7 * h;
            }
            assert!((q - expected_asymmetric_cost(&mix, est, lambda)).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_above_one_underestimates() {
        let mix = [ConditionalComponent { posterior: 1.0, mean: 2.0, variance: 1.0 }];
        let est = asymmetric_minimizer(&mix, 4.0);
        assert!(est < 2.0);
        // stationarity: mu + (lambda^2 - 1)(mu Phi(mu) + phi(mu)) = 0
        let mu = est - 2.0;
        let grad = mu + 15.0 * (mu * normal_cdf(mu) + normal_pdf(mu));
        assert!(grad.abs() < 1e-5);
    }

    #[test]
    fn degenerate_variance_returns_mean() {
        let mix = [ConditionalComponent { posterior: 1.0, mean: 0.25, variance: 0.0 }];
        assert_eq!(asymmetric_minimizer(&mix, 3.0), 0.25);
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = GaussianMixture::new(vec![joint(1.0, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])], None).unwrap();
        assert!(GmmRegressor::new(&g).is_err());
        let r = GmmRegressor::new(&g.with_split(1).unwrap()).unwrap();
        assert!(r.asymmetric_estimate(&[0.0], 0, 0.5).is_err());
        assert!(r.conditional_marginal(&[0.0], 1).is_err());
        assert!(r.conditional_mean(&[0.0, 1.0]).is_err());
    }
}
