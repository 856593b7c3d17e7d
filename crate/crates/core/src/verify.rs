//! Second-moment speaker models compared with the arithmetic-harmonic
//! sphericity measure.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::linalg::{Cholesky, Matrix};

/// Relative diagonal loading applied when a model matrix fails to factor.
pub const REGULARIZATION: f64 = 1e-8;

/// `(1/N) sum x x^T`, or the mean-centred covariance when `mean_removal` is set.
pub fn second_moment(vectors: &[Vec<f64>], dim: usize, mean_removal: bool) -> Matrix {
    let n = vectors.len() as f64;
    let mean = if mean_removal {
        let mut m = vec![0.0; dim];
        for v in vectors {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    } else {
        vec![0.0; dim]
    };
    let mut c = Matrix::zeros(dim, dim);
    let mut centred = vec![0.0; dim];
    for v in vectors {
        for ((c, x), m) in centred.iter_mut().zip(v).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            for j in 0..=i {
                c[(i, j)] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = c[(i, j)] / n;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Covariance-type model of one speaker (or one test utterance).
#[derive(Debug, Clone)]
pub struct SpeakerModel {
    speaker_id: String,
    kind: FeatureKind,
    n_frames: usize,
    mean_removed: bool,
    regularized: bool,
    matrix: Matrix,
    factor: Cholesky,
}

impl PartialEq for SpeakerModel {
    fn eq(&self, other: &Self) -> bool {
        self.speaker_id == other.speaker_id
            && self.kind == other.kind
            && self.n_frames == other.n_frames
            && self.mean_removed == other.mean_removed
            && self.matrix == other.matrix
    }
}

fn factor_with_loading(mut matrix: Matrix, id: &str) -> Result<(Matrix, Cholesky, bool)> {
    if let Some(f) = Cholesky::new(&matrix) {
        return Ok((matrix, f, false));
    }
    let l = matrix.rows() as f64;
    let load = REGULARIZATION * matrix.trace() / l;
    matrix.add_diagonal(load);
    log::warn!("{id}: second-moment matrix not positive definite; added {load:e} to the diagonal");
    let f = Cholesky::new(&matrix).ok_or_else(|| Error::NotPositiveDefinite(format!("model {id} after regularization")))?;
    Ok((matrix, f, true))
}

impl SpeakerModel {
    /// Estimates the model matrix from a feature sequence.
    pub fn train(speaker_id: impl Into<String>, features: &FeatureSequence, mean_removal: bool) -> Result<Self> {
        let speaker_id = speaker_id.into();
        let n = features.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("{speaker_id}: {n} frames, need at least 2")));
        }
        let dim = features.dim();
        if n < dim {
            log::warn!("{speaker_id}: {n} frames for a {dim}x{dim} matrix; estimate is rank deficient");
        }
        let c = second_moment(features.vectors(), dim, mean_removal);
        let (matrix, factor, regularized) = factor_with_loading(c, &speaker_id)?;
        Ok(Self { speaker_id, kind: features.kind(), n_frames: n, mean_removed: mean_removal, regularized, matrix, factor })
    }

    /// Builds a model from an explicit matrix.
    pub fn from_matrix(speaker_id: impl Into<String>, kind: FeatureKind, n_frames: usize, mean_removed: bool, matrix: Matrix) -> Result<Self> {
        let speaker_id = speaker_id.into();
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidParameter(format!("{speaker_id}: model matrix must be square and non-empty")));
        }
        if matrix.asymmetry() > 1e-12 {
            return Err(Error::InvalidParameter(format!("{speaker_id}: model matrix is not symmetric")));
        }
        let (matrix, factor, regularized) = factor_with_loading(matrix, &speaker_id)?;
        Ok(Self { speaker_id, kind, n_frames, mean_removed, regularized, matrix, factor })
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn mean_removed(&self) -> bool {
        self.mean_removed
    }

    /// Whether diagonal loading was needed to make the matrix factor.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn to_json(&self) -> String {
        let file = SpeakerModelFile {
            format: SPEAKER_FORMAT.into(),
            version: SPEAKER_VERSION,
            speaker_id: self.speaker_id.clone(),
            kind: self.kind,
            dim: self.dim(),
            n_frames: self.n_frames,
            mean_removed: self.mean_removed,
            matrix: self.matrix.as_slice().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SpeakerModelFile = serde_json::from_str(text)?;
        if f.format != SPEAKER_FORMAT || f.version != SPEAKER_VERSION {
            return Err(Error::Format(format!("expected {SPEAKER_FORMAT} v{SPEAKER_VERSION}, found {} v{}", f.format, f.version)));
        }
        let m = Matrix::from_row_major(f.dim, f.dim, f.matrix).ok_or_else(|| Error::Format("matrix size does not match dim".into()))?;
        Self::from_matrix(f.speaker_id, f.kind, f.n_frames, f.mean_removed, m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const SPEAKER_FORMAT: &str = "bwsv-speaker";
pub const SPEAKER_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpeakerModelFile {
    format: String,
    version: u32,
    speaker_id: String,
    kind: FeatureKind,
    dim: usize,
    n_frames: usize,
    mean_removed: bool,
    /// Row-major `dim x dim`.
    matrix: Vec<f64>,
}

/// How the two trace terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SphericityForm {
    /// `log(tr(A B^-1) tr(B A^-1)) - 2 log l`: zero for proportional
    /// matrices, non-negative, symmetric.
    #[default]
    Product,
    /// `log(tr(A B^-1) / tr(B A^-1)) - 2 log l`. Kept only for comparison;
    /// it is `-2 log l` for identical matrices.
    Ratio,
}

fn traces(a: &Matrix, fa: &Cholesky, b: &Matrix, fb: &Cholesky) -> Result<(f64, f64)> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension { expected: a.rows(), got: b.rows() });
    }
    Ok((fb.trace_of_product_inverse(a), fa.trace_of_product_inverse(b)))
}

fn combine(t_ab: f64, t_ba: f64, l: usize, form: SphericityForm) -> f64 {
    let log_l2 = 2.0 * (l as f64).ln();
    match form {
        SphericityForm::Product => t_ab.ln() + t_ba.ln() - log_l2,
        SphericityForm::Ratio => t_ab.ln() - t_ba.ln() - log_l2,
    }
}

fn factor(m: &Matrix, which: &str) -> Result<Cholesky> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{which} matrix is not square")));
    }
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(format!("{which} matrix")))
}

/// Arithmetic-harmonic sphericity distance between two SPD matrices,
/// product form. Neither inverse is formed explicitly.
pub fn ahs_distance(test: &Matrix, model: &Matrix) -> Result<f64> {
    ahs_distance_with(test, model, SphericityForm::Product)
}

pub fn ahs_distance_with(test: &Matrix, model: &Matrix, form: SphericityForm) -> Result<f64> {
    let (ft, fm) = (factor(test, "test")?, factor(model, "model")?);
    let (t1, t2) = traces(test, &ft, model, &fm)?;
    Ok(combine(t1, t2, test.rows(), form))
}

/// Distance between two trained models, reusing their cached factors.
pub fn model_distance(test: &SpeakerModel, model: &SpeakerModel, form: SphericityForm) -> Result<f64> {
    let (t1, t2) = traces(&test.matrix, &test.factor, &model.matrix, &model.factor)?;
    Ok(combine(t1, t2, test.dim(), form))
}

/// `p = exp(-d / 2)`.
pub fn distance_to_probability(d: f64) -> f64 {
    (-0.5 * d).exp()
}

/// One verification attempt: a test utterance against a claimed identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub test_utterance_id: String,
    pub claimed_speaker_id: String,
    pub score: f64,
    pub is_target: bool,
}

/// Features of one test utterance with its true speaker.
#[derive(Debug, Clone)]
pub struct TestUtterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub features: FeatureSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub mean_removal: bool,
    pub form: SphericityForm,
}

/// Scores every test utterance against every model, in input order.
/// Utterances too short for a covariance estimate are skipped with a
/// warning; a kind or dimension mismatch is an error.
pub fn score_trials(models: &[SpeakerModel], tests: &[TestUtterance], options: ScoringOptions) -> Result<Vec<Trial>> {
    let Some(first) = models.first() else {
        return Ok(Vec::new());
    };
    for m in models {
        if m.kind != first.kind || m.dim() != first.dim() {
            return Err(Error::InvalidParameter(format!("model {} is {} l={}, expected {} l={}", m.speaker_id, m.kind, m.dim(), first.kind, first.dim())));
        }
    }
    let mut trials = Vec::with_capacity(models.len() * tests.len());
    for t in tests {
        if t.features.kind() != first.kind || t.features.dim() != first.dim() {
            return Err(Error::InvalidParameter(format!("test {} features do not match the models", t.utterance_id)));
        }
        let test_model = match SpeakerModel::train(t.utterance_id.clone(), &t.features, options.mean_removal) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("skipping test utterance {}: {e}", t.utterance_id);
                continue;
            }
        };
        for m in models {
            let d = model_distance(&test_model, m, options.form)?;
            trials.push(Trial {
                test_utterance_id: t.utterance_id.clone(),
                claimed_speaker_id: m.speaker_id.clone(),
                // rounding can leave d a hair below zero or push p to underflow
                score: distance_to_probability(d).clamp(f64::MIN_POSITIVE, 1.0),
                is_target: m.speaker_id == t.speaker_id,
            });
        }
    }
    Ok(trials)
}

/// `utt,claimed,score,is_target` with a header row.
pub fn trials_to_csv(trials: &[Trial]) -> String {
    let mut out = String::from("utt,claimed,score,is_target\n");
    for t in trials {
        let _ = writeln!(out, "{},{},{},{}", t.test_utterance_id, t.claimed_speaker_id, t.score, t.is_target);
    }
    out
}

pub fn trials_from_csv(text: &str) -> Result<Vec<Trial>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "utt,claimed,score,is_target" => {}
        _ => return Err(Error::Format("trial CSV must start with utt,claimed,score,is_target".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Format(format!("trial CSV line {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let score: f64 = f[2].trim().parse().map_err(|_| bad())?;
            if !(score.is_finite() && score > 0.0) {
                return Err(bad());
            }
            Ok(Trial {
                test_utterance_id: f[0].to_string(),
                claimed_speaker_id: f[1].to_string(),
                score,
                is_target: f[3].trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Splits trial scores into `(targets, non-targets)`.
pub fn split_scores(trials: &[Trial]) -> (Vec<f64>, Vec<f64>) {
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for t in trials {
        if t.is_target {
            targets.push(t.score);
        } else {
            nontargets.push(t.score);
        }
    }
    (targets, nontargets)
}
