use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Component, GaussianMixture};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub rel_tol: f64,
    /// Each M-step adds `cov_floor_rel * mean data variance` to every
    /// covariance diagonal.
    pub cov_floor_rel: f64,
    /// Components whose weight falls below this are re-seeded.
    pub min_weight: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { k: 8, seed: 0, max_iter: 200, rel_tol: 1e-6, cov_floor_rel: 1e-6, min_weight: 1e-8 }
    }
}

impl EmConfig {
    pub fn with_k(k: usize, seed: u64) -> Self {
        Self { k, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReseedEvent {
    /// M-step (1-based) in which the collapse was detected.
    pub iteration: usize,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    /// Mean per-sample log-likelihood; entry `i` is evaluated after `i`
    /// M-steps (entry 0 is the k-means++ initialisation).
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeds: Vec<ReseedEvent>,
}

impl FitReport {
    /// Largest drop between consecutive log-likelihoods, ignoring steps that
    /// follow a re-seed. Zero for a monotone trace.
    pub fn worst_decrease(&self) -> f64 {
        let reseeded: Vec<usize> = self.reseeds.iter().map(|r| r.iteration).collect();
        self.loglik_trace
            .windows(2)
            .enumerate()
            .filter(|(i, _)| !reseeded.contains(&(i + 1)))
            .map(|(_, w)| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: the first centre uniformly, each further one with
/// probability proportional to its squared distance to the nearest centre.
fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    let mut centres = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = data.iter().map(|x| squared_distance(x, &data[centres[0]])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.push(pick);
        for (d, x) in nearest.iter_mut().zip(data) {
            *d = d.min(squared_distance(x, &data[pick]));
        }
    }
    centres
}

struct Moments {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

fn data_moments(data: &[Vec<f64>]) -> Moments {
    let n = data.len() as f64;
    let dim = data[0].len();
    let mut mean = vec![0.0; dim];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut variance = vec![0.0; dim];
    for x in data {
        for ((s, v), m) in variance.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    variance.iter_mut().for_each(|s| *s /= n);
    Moments { mean, variance }
}

/// Weighted mean and floored covariance for one component.
fn weighted_gaussian(data: &[Vec<f64>], resp: &[f64], floor: f64) -> (f64, Vec<f64>, Matrix) {
    let dim = data[0].len();
    let nk: f64 = resp.iter().sum();
    let mut mean = vec![0.0; dim];
    for (x, &r) in data.iter().zip(resp) {
        if r == 0.0 {
            continue;
        }
        for (m, v) in mean.iter_mut().zip(x) {
            *m += r * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nk);

    let mut cov = Matrix::zeros(dim, dim);
    let mut centred = vec![0.0; dim];
    for (x, &r) in data.iter().zip(resp) {
        if r == 0.0 {
            continue;
        }
        for ((c, v), m) in centred.iter_mut().zip(x).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            let ri = r * centred[i];
            for j in 0..=i {
                cov[(i, j)] += ri * centred[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[(i, j)] / nk;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov.add_diagonal(floor);
    (nk, mean, cov)
}

/// Adds growing diagonal jitter until the matrix factors.
fn ensure_spd(mut cov: Matrix, floor: f64) -> Matrix {
    let mut jitter = floor.max(1e-12);
    while Cholesky::new(&cov).is_none() {
        log::warn!("covariance not positive definite; adding {jitter:e} to the diagonal");
        cov.add_diagonal(jitter);
        jitter *= 10.0;
    }
    cov
}

/// Fits a full-covariance mixture by expectation-maximisation, seeded by
/// k-means++ from `config.seed`. Single-threaded and deterministic: the same
/// data and seed give a bit-identical model.
pub fn em_fit(data: &[Vec<f64>], config: &EmConfig) -> Result<(GaussianMixture, FitReport)> {
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    if data.len() < 10 * k {
        return Err(Error::InsufficientData(format!("{} vectors for {k} components; need at least {}", data.len(), 10 * k)));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter("zero-dimensional data".into()));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite training data".into()));
    }

    let n = data.len();
    let moments = data_moments(data);
    let mean_var = moments.variance.iter().sum::<f64>() / dim as f64;
    let floor = config.cov_floor_rel * mean_var;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centres = kmeans_pp(data, k, &mut rng);

    // Hard assignment to the nearest centre gives the initial responsibilities.
    let mut resp = vec![vec![0.0; n]; k];
    for (i, x) in data.iter().enumerate() {
        let best = centres
            .iter()
            .enumerate()
            .map(|(c, &idx)| (c, squared_distance(x, &data[idx])))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc })
            .0;
        resp[best][i] = 1.0;
    }

    let mut report = FitReport {
        k,
        seed: config.seed,
        n_samples: n,
        loglik_trace: Vec::new(),
        iterations: 0,
        converged: false,
        reseeds: Vec::new(),
    };

    // Datum furthest from the data mean in variance-normalised distance.
    let outlier = {
        let score = |x: &Vec<f64>| -> f64 {
            x.iter()
                .zip(&moments.mean)
                .zip(&moments.variance)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) * (v - m) / s } else { 0.0 })
                .sum()
        };
        let mut best = 0;
        for (i, x) in data.iter().enumerate() {
            if score(x) > score(&data[best]) {
                best = i;
            }
        }
        best
    };

    let m_step = |resp: &[Vec<f64>], iteration: usize, report: &mut FitReport| -> Result<GaussianMixture> {
        let mut comps = Vec::with_capacity(k);
        for (c, r) in resp.iter().enumerate() {
            let nk: f64 = r.iter().sum();
            if nk / (n as f64) < config.min_weight {
                log::warn!("component {c} collapsed at iteration {iteration}; re-seeding");
                report.reseeds.push(ReseedEvent { iteration, component: c });
                let mut cov = Matrix::from_diagonal(&moments.variance);
                cov.add_diagonal(floor);
                comps.push(Component { weight: 1.0 / n as f64, mean: data[outlier].clone(), covariance: ensure_spd(cov, floor) });
                continue;
            }
            let (nk, mean, cov) = weighted_gaussian(data, r, floor);
            comps.push(Component { weight: nk / n as f64, mean, covariance: ensure_spd(cov, floor) });
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= total);
        GaussianMixture::new(comps, None)
    };

    let mut model = m_step(&resp, 0, &mut report)?;
    let mut log_dens = vec![0.0; k];
    loop {
        // E-step
        let mut total_ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            log_dens.copy_from_slice(&model.component_log_densities(x));
            let norm = log_sum_exp(&log_dens);
            total_ll += norm;
            for (c, ld) in log_dens.iter().enumerate() {
                resp[c][i] = (ld - norm).exp();
            }
        }
        let ll = total_ll / n as f64;
        if let Some(&prev) = report.loglik_trace.last() {
            if ll - prev < -1e-9 && !report.reseeds.iter().any(|r| r.iteration == report.iterations) {
                log::warn!("log-likelihood decreased from {prev} to {ll} at iteration {}", report.iterations);
            }
            report.loglik_trace.push(ll);
            if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.rel_tol || (ll - prev).abs() == 0.0 {
                report.converged = true;
                break;
            }
        } else {
            report.loglik_trace.push(ll);
        }
        if report.iterations >= config.max_iter {
            break;
        }
        report.iterations += 1;
        model = m_step(&resp, report.iterations, &mut report)?;
    }
    log::debug!("em: k={k} n={n} iterations={} converged={} ll={:?}", report.iterations, report.converged, report.loglik_trace.last());
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
        // Box-Muller; keeps the test independent of rand_distr
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        (r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin())
    }

    fn two_cluster_data(seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let (a, b) = gaussian_pair(&mut rng);
                if i % 3 == 0 {
                    vec![5.0 + 0.5 * a, -3.0 + 0.5 * b]
                } else {
                    vec![-2.0 + 0.8 * a, 1.0 + 0.3 * b + 0.2 * a]
                }
            })
            .collect()
    }

    #[test]
    fn k1_is_the_sample_moments() {
        let data = two_cluster_data(3, 500);
        let cfg = EmConfig { cov_floor_rel: 0.0, ..EmConfig::with_k(1, 9) };
        let (g, report) = em_fit(&data, &cfg).unwrap();
        let n = data.len() as f64;
        let mx = data.iter().map(|v| v[0]).sum::<f64>() / n;
        let my = data.iter().map(|v| v[1]).sum::<f64>() / n;
        let sxy = data.iter().map(|v| (v[0] - mx) * (v[1] - my)).sum::<f64>() / n;
        let c = &g.components()[0];
        assert!((c.mean[0] - mx).abs() < 1e-10 && (c.mean[1] - my).abs() < 1e-10);
        assert!((c.covariance[(0, 1)] - sxy).abs() < 1e-10);
        assert!(report.converged);
        assert!(report.iterations <= 1);
    }

    #[test]
    fn recovers_separated_means() {
        let data = two_cluster_data(5, 1500);
        let (g, report) = em_fit(&data, &EmConfig::with_k(2, 1)).unwrap();
        assert!(report.worst_decrease() <= 1e-9);
        let mut means: Vec<Vec<f64>> = g.components().iter().map(|c| c.mean.clone()).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((means[0][0] + 2.0).abs() < 0.1 && (means[0][1] - 1.0).abs() < 0.1);
        assert!((means[1][0] - 5.0).abs() < 0.1 && (means[1][1] + 3.0).abs() < 0.1);
        let w: Vec<f64> = g.components().iter().map(|c| c.weight).collect();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = two_cluster_data(8, 400);
        let a = em_fit(&data, &EmConfig::with_k(3, 77)).unwrap();
        let b = em_fit(&data, &EmConfig::with_k(3, 77)).unwrap();
        assert_eq!(a.0.to_json(Some(a.1.clone())), b.0.to_json(Some(b.1)));
    }

    #[test]
    fn refuses_small_data() {
        let data = two_cluster_data(1, 79);
        assert!(matches!(em_fit(&data, &EmConfig::with_k(8, 0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn collapsed_component_is_reseeded() {
        // 40 copies of one point and one distinct point: with k = 4 the
        // duplicate centres leave empty clusters.
        let mut data = vec![vec![1.0, 1.0]; 40];
        data.push(vec![3.0, -1.0]);
        let cfg = EmConfig { max_iter: 5, ..EmConfig::with_k(4, 2) };
        let (g, report) = em_fit(&data, &cfg).unwrap();
        assert!(!report.reseeds.is_empty());
        assert_eq!(g.n_components(), 4);
        assert!(g.components().iter().all(|c| c.weight > 0.0));
    }
}
