use bwsv::gmm::{em_fit, Component, EmConfig, GaussianMixture, GmmRegressor};
use bwsv::linalg::Matrix;
use bwsv_oracles::{gaussian_regression, mixture_log_density, quadrature_asymmetric_estimate, quadrature_conditional_mean, random_spd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_mixture(rng: &mut impl Rng, k: usize, d: usize, split: Option<usize>) -> (GaussianMixture, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let means: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let covs: Vec<Vec<Vec<f64>>> = (0..k).map(|_| random_spd(rng, d)).collect();
    let comps = weights
        .iter()
        .zip(&means)
        .zip(&covs)
        .map(|((w, m), c)| Component { weight: *w, mean: m.clone(), covariance: Matrix::from_rows(c).unwrap() })
        .collect();
    (GaussianMixture::new(comps, split).unwrap(), weights, means, covs)
}

fn gaussian_data(rng: &mut impl Rng, n: usize, clusters: &[(Vec<f64>, f64)]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let (centre, spread) = &clusters[i % clusters.len()];
            centre.iter().map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + spread * z
            }).collect::<Vec<f64>>()
        })
        .collect()
}

#[test]
fn log_likelihood_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let k = rng.random_range(1..=4);
        let d = rng.random_range(1..=5);
        let (g, w, m, c) = random_mixture(&mut rng, k, d, None);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ours = g.log_likelihood(&x).unwrap();
        let oracle = mixture_log_density(&x, &w, &m, &c);
        assert!((ours - oracle).abs() < 1e-10, "{ours} vs {oracle}");
    }
}

#[test]
fn em_trace_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for run in 0..24 {
        let k = [1, 2, 8][run % 3];
        let d = rng.random_range(1..=4);
        let clusters: Vec<(Vec<f64>, f64)> = (0..3).map(|_| ((0..d).map(|_| rng.random_range(-4.0..4.0)).collect(), rng.random_range(0.3..1.5))).collect();
        let data = gaussian_data(&mut rng, 400, &clusters);
        let (_, report) = em_fit(&data, &EmConfig::with_k(k, run as u64)).unwrap();
        assert!(report.worst_decrease() <= 1e-9, "run {run}: {:?}", report.loglik_trace);
    }
}

#[test]
fn em_single_component_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let data = gaussian_data(&mut rng, 300, &[(vec![1.0, -2.0, 0.5], 1.3)]);
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| data.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let cov = |i: usize, j: usize| data.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum::<f64>() / n;
    let mean_var = (0..3).map(|j| cov(j, j)).sum::<f64>() / 3.0;

    for floor in [0.0, 1e-6] {
        let cfg = EmConfig { cov_floor_rel: floor, ..EmConfig::with_k(1, 3) };
        let (g, _) = em_fit(&data, &cfg).unwrap();
        let c = &g.components()[0];
        for j in 0..3 {
            assert!((c.mean[j] - mean[j]).abs() < 1e-10);
            for i in 0..3 {
                let expect = cov(i, j) + if i == j { floor * mean_var } else { 0.0 };
                assert!((c.covariance[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn single_gaussian_regression_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let (d, dx) = (rng.random_range(2..=7), 0);
        let dx = dx + rng.random_range(1..d);
        let (g, _, m, c) = random_mixture(&mut rng, 1, d, Some(dx));
        let r = GmmRegressor::new(&g).unwrap();
        let x: Vec<f64> = (0..dx).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ours = r.conditional_mean(&x).unwrap();
        let oracle = gaussian_regression(&x, &m[0], &c[0]);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        let at_mean = r.conditional_mean(&m[0][..dx]).unwrap();
        for (a, b) in at_mean.iter().zip(&m[0][dx..]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn two_by_two(c: &[Vec<f64>]) -> [[f64; 2]; 2] {
    [[c[0][0], c[0][1]], [c[1][0], c[1][1]]]
}

#[test]
fn two_component_regression_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..20 {
        let (g, w, m, c) = random_mixture(&mut rng, 2, 2, Some(1));
        let r = GmmRegressor::new(&g).unwrap();
        let means: Vec<[f64; 2]> = m.iter().map(|v| [v[0], v[1]]).collect();
        let covs: Vec<[[f64; 2]; 2]> = c.iter().map(|v| two_by_two(v)).collect();
        for x in [-2.0, -0.3, 0.8, 2.5] {
            let ours = r.conditional_mean(&[x]).unwrap()[0];
            let q = quadrature_conditional_mean(x, &w, &means, &covs, -30.0, 30.0, 60_000);
            assert!((ours - q).abs() < 1e-4, "{ours} vs {q}");
        }
    }
}

#[test]
fn asymmetric_estimate_tracks_quadrature_and_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..10 {
        let (g, _, _, _) = random_mixture(&mut rng, 3, 3, Some(2));
        let r = GmmRegressor::new(&g).unwrap();
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let marginal = r.conditional_marginal(&x, 0).unwrap();
        let w: Vec<f64> = marginal.iter().map(|c| c.posterior).collect();
        let m: Vec<f64> = marginal.iter().map(|c| c.mean).collect();
        let v: Vec<f64> = marginal.iter().map(|c| c.variance).collect();
        let mmse = r.conditional_mean(&x).unwrap()[0];
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 2.0, 4.0, 8.0] {
            let est = r.asymmetric_estimate(&x, 0, lambda).unwrap();
            let oracle = quadrature_asymmetric_estimate(&w, &m, &v, lambda);
            assert!((est - oracle).abs() < 1e-3, "lambda {lambda}: {est} vs {oracle}");
            assert!(est <= prev);
            if lambda == 1.0 {
                assert!((est - mmse).abs() < 1e-5);
            } else {
                assert!(est < mmse);
            }
            prev = est;
        }
    }
}

#[test]
fn single_gaussian_regression_is_affine_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let data: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            vec![a, 0.5 * a + b, 1.0 + 0.8 * a - 0.3 * b + 0.2 * e]
        })
        .collect();
    // x' = M x + t on the first two coordinates
    let (m, t) = ([[2.0, 0.5], [-1.0, 1.5]], [3.0, -1.0]);
    let map = |x: &[f64]| vec![m[0][0] * x[0] + m[0][1] * x[1] + t[0], m[1][0] * x[0] + m[1][1] * x[1] + t[1]];
    let moved: Vec<Vec<f64>> = data.iter().map(|v| [map(&v[..2]), vec![v[2]]].concat()).collect();
    let cfg = EmConfig { cov_floor_rel: 0.0, ..EmConfig::with_k(1, 0) };
    let fit = |d: &[Vec<f64>]| GmmRegressor::new(&em_fit(d, &cfg).unwrap().0.with_split(2).unwrap()).unwrap();
    let (a, b) = (fit(&data), fit(&moved));
    for x in [[0.0, 0.0], [1.0, -2.0], [-0.5, 0.7]] {
        let ya = a.conditional_mean(&x).unwrap()[0];
        let yb = b.conditional_mean(&map(&x)).unwrap()[0];
        assert!((ya - yb).abs() < 1e-9, "{ya} vs {yb}");
    }
}

proptest! {
    #[test]
    fn posteriors_sum_to_one(seed in any::<u64>(), k in 1usize..6, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _, _, _) = random_mixture(&mut rng, k, d, None);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
        let p = g.posteriors(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn json_round_trip_preserves_mixture(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _, _, _) = random_mixture(&mut rng, 3, 4, Some(2));
        let (back, _) = GaussianMixture::from_json(&g.to_json(None)).unwrap();
        prop_assert_eq!(back, g);
    }
}
