//! Full-covariance Gaussian mixtures: EM training, likelihoods, and
//! conditional estimation of one block of variables given the other.

mod conditional;
mod em;

pub use conditional::{ConditionalComponent, GmmRegressor};
pub use em::{em_fit, EmConfig, FitReport, ReseedEvent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-sum-exp of a slice; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// K-component Gaussian mixture over `D`-dimensional vectors. When a split
/// `D_x` is set, the first `D_x` coordinates are the observed block `x`
/// and the rest the predicted block `y`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<Component>,
    dim: usize,
    split: Option<usize>,
    factors: Vec<Cholesky>,
    /// `log w_k - (D log 2pi + log det S_k) / 2`
    log_norms: Vec<f64>,
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.split == other.split
    }
}

impl GaussianMixture {
    /// Validates and caches Cholesky factors. Weights must sum to one within
    /// 1e-9; sums off by more than 1e-12 are renormalized. Smaller drift is
    /// left alone so that save/load round trips are bit-exact.
    pub fn new(mut components: Vec<Component>, split: Option<usize>) -> Result<Self> {
        let dim = components.first().map(|c| c.mean.len()).ok_or_else(|| Error::InvalidParameter("mixture has no components".into()))?;
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| !(c.weight > 0.0)) {
            return Err(Error::InvalidParameter(format!("mixture weights must be positive and sum to 1 (sum {total})")));
        }
        if let Some(dx) = split {
            if dx == 0 || dx >= dim {
                return Err(Error::InvalidParameter(format!("split {dx} must lie strictly inside dimension {dim}")));
            }
        }
        let mut factors = Vec::with_capacity(components.len());
        let mut log_norms = Vec::with_capacity(components.len());
        for (k, c) in components.iter_mut().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::Dimension { expected: dim, got: c.mean.len() });
            }
            if c.covariance.rows() != dim || !c.covariance.is_square() {
                return Err(Error::Dimension { expected: dim, got: c.covariance.rows() });
            }
            if (total - 1.0).abs() > 1e-12 {
                c.weight /= total;
            }
            let f = Cholesky::new(&c.covariance)
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of component {k}")))?;
            log_norms.push(c.weight.ln() - 0.5 * (dim as f64 * LN_2PI + f.log_det()));
            factors.push(f);
        }
        Ok(Self { components, dim, split, factors, log_norms })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> Option<usize> {
        self.split
    }

    pub fn with_split(self, split: usize) -> Result<Self> {
        Self::new(self.components, Some(split))
    }

    /// `log(w_k N(x; mu_k, S_k))` for every component.
    pub fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = vec![0.0; self.dim];
        self.components
            .iter()
            .zip(&self.factors)
            .zip(&self.log_norms)
            .map(|((c, f), ln)| {
                for ((s, xi), mi) in scratch.iter_mut().zip(x).zip(&c.mean) {
                    *s = xi - mi;
                }
                f.forward_substitute(&mut scratch);
                ln - 0.5 * scratch.iter().map(|v| v * v).sum::<f64>()
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(log_sum_exp(&self.component_log_densities(x)))
    }

    /// Component posteriors `p(k | x)`.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let lp = self.component_log_densities(x);
        let total = log_sum_exp(&lp);
        Ok(lp.iter().map(|v| (v - total).exp()).collect())
    }

    /// Mean per-vector log-likelihood of a data set.
    pub fn mean_log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for x in data {
            total += self.log_likelihood(x)?;
        }
        Ok(total / data.len().max(1) as f64)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn to_file(&self, training: Option<FitReport>) -> GmmFile {
        GmmFile {
            format: GMM_FORMAT.into(),
            version: GMM_VERSION,
            dim: self.dim,
            split: self.split,
            components: self
                .components
                .iter()
                .map(|c| ComponentFile { weight: c.weight, mean: c.mean.clone(), covariance: c.covariance.as_slice().to_vec() })
                .collect(),
            training,
        }
    }

    pub fn to_json(&self, training: Option<FitReport>) -> String {
        serde_json::to_string_pretty(&self.to_file(training)).expect("mixtures serialize")
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<FitReport>)> {
        let file: GmmFile = serde_json::from_str(text)?;
        file.into_mixture()
    }
}

pub const GMM_FORMAT: &str = "bwsv-gmm";
pub const GMM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFile {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `D x D`.
    pub covariance: Vec<f64>,
}

/// Versioned JSON layout of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub split: Option<usize>,
    pub components: Vec<ComponentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<FitReport>,
}

impl GmmFile {
    pub fn into_mixture(self) -> Result<(GaussianMixture, Option<FitReport>)> {
        if self.format != GMM_FORMAT || self.version != GMM_VERSION {
            return Err(Error::Format(format!("expected {GMM_FORMAT} v{GMM_VERSION}, found {} v{}", self.format, self.version)));
        }
        let comps = self
            .components
            .into_iter()
            .map(|c| {
                let covariance = Matrix::from_row_major(self.dim, self.dim, c.covariance)
                    .ok_or_else(|| Error::Format("covariance size does not match dim".into()))?;
                Ok(Component { weight: c.weight, mean: c.mean, covariance })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((GaussianMixture::new(comps, self.split)?, self.training))
    }
}
