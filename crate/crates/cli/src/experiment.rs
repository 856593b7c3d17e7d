//! The full verification experiment: derive the channel scenarios from a
//! wideband corpus, train per-speaker models, score all trials and
//! tabulate minimum detection cost over feature kinds and dimensions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bwsv::audio::{BitDepth, Role};
use bwsv::bwe::BweTrainConfig;
use bwsv::eval::{det_curve, export_det, summarize, DcfParams};
use bwsv::features::{FeatureConfig, FeatureKind, FeatureSequence};
use bwsv::gmm::EmConfig;
use bwsv::verify::{score_trials, split_scores, trials_to_csv, ScoringOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{self, corpus_features, load_manifest, speaker_models, test_utterances, ExtendSummary, EXTEND_SUMMARY_NAME};
use crate::digest::{combine, file_sha256, sha256_hex};
use crate::error::{CliError, CliResult};

pub const REPORT_FORMAT: &str = "bwsv-report";
pub const REPORT_VERSION: u32 = 1;
pub const MIN_DIM: usize = 4;
pub const MAX_DIM: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Original 16 kHz microphone speech.
    Wide,
    /// Telephone band; 16 kHz PCM, or 8 kHz A-law in ISDN mode.
    Narrow,
    /// The narrow corpus after bandwidth extension.
    Extended,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Wide, Scenario::Narrow, Scenario::Extended];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Wide => "wide",
            Scenario::Narrow => "narrow",
            Scenario::Extended => "extended",
        }
    }
}

/// Manifests of prepared corpora. Missing narrow and extended corpora are
/// derived from the wide one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpora {
    #[serde(default)]
    pub wide: Option<PathBuf>,
    #[serde(default)]
    pub narrow: Option<PathBuf>,
    #[serde(default)]
    pub extended: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BweSettings {
    /// Ready model; takes precedence over `train_manifest`.
    pub model: Option<PathBuf>,
    /// 16 kHz corpus to train a model on when none is given.
    pub train_manifest: Option<PathBuf>,
    pub k: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for BweSettings {
    fn default() -> Self {
        Self { model: None, train_manifest: None, k: EmConfig::default().k, seed: 1, lambda: 2.0 }
    }
}

fn all_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn all_kinds() -> Vec<FeatureKind> {
    vec![FeatureKind::Lpcc, FeatureKind::Melcepst]
}

fn default_dims() -> Vec<usize> {
    vec![4, 12, 18, 27]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpora: Corpora,
    pub out_dir: PathBuf,
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<FeatureKind>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// ISDN channel: narrow corpus as 8 kHz A-law, extended output
    /// re-companded to A-law.
    #[serde(default)]
    pub isdn: bool,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub scoring: ScoringOptions,
    #[serde(default)]
    pub dcf: DcfParams,
    #[serde(default)]
    pub bwe: BweSettings,
}

impl ExperimentConfig {
    pub fn new(wide_manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpora: Corpora { wide: Some(wide_manifest.into()), ..Corpora::default() },
            out_dir: out_dir.into(),
            scenarios: all_scenarios(),
            kinds: all_kinds(),
            dims: default_dims(),
            isdn: false,
            features: FeatureConfig::default(),
            scoring: ScoringOptions::default(),
            dcf: DcfParams::default(),
            bwe: BweSettings::default(),
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut config.corpora.wide, &mut config.corpora.narrow, &mut config.corpora.extended, &mut config.bwe.model, &mut config.bwe.train_manifest]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut config.out_dir);
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.scenarios.is_empty() || self.kinds.is_empty() || self.dims.is_empty() {
            return bad("scenarios, kinds and dims must all be non-empty".into());
        }
        if let Some(d) = self.dims.iter().find(|d| !(MIN_DIM..=MAX_DIM).contains(*d)) {
            return bad(format!("dimension {d} outside [{MIN_DIM}, {MAX_DIM}]"));
        }
        for (what, dup) in [("scenario", has_duplicates(&self.scenarios)), ("kind", has_duplicates(&self.kinds)), ("dimension", has_duplicates(&self.dims))] {
            if dup {
                return bad(format!("duplicate {what} in config"));
            }
        }
        self.dcf.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for rate in [8000, 16000] {
            self.features.frame.validate(rate).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.bwe.lambda >= 1.0) {
            return bad(format!("bwe.lambda must be at least 1, got {}", self.bwe.lambda));
        }
        if self.bwe.k == 0 {
            return bad("bwe.k must be positive".into());
        }
        let wants = |s| self.scenarios.contains(&s);
        let c = &self.corpora;
        if c.wide.is_none() && (wants(Scenario::Wide) || (wants(Scenario::Narrow) && c.narrow.is_none()) || (wants(Scenario::Extended) && c.extended.is_none() && c.narrow.is_none())) {
            return bad("corpora.wide is required to run or derive the requested scenarios".into());
        }
        if wants(Scenario::Extended) && c.extended.is_none() && self.bwe.model.is_none() && self.bwe.train_manifest.is_none() {
            return bad("the extended scenario needs corpora.extended, bwe.model or bwe.train_manifest (see `bwsv train-bwe`)".into());
        }
        Ok(())
    }

    /// Everything that shapes the numbers, without any file locations.
    pub fn settings(&self) -> Settings {
        Settings {
            scenarios: self.scenarios.clone(),
            kinds: self.kinds.clone(),
            dims: self.dims.clone(),
            isdn: self.isdn,
            features: self.features.clone(),
            scoring: self.scoring,
            dcf: self.dcf,
            bwe_k: self.bwe.k,
            bwe_seed: self.bwe.seed,
            bwe_lambda: self.bwe.lambda,
        }
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub scenarios: Vec<Scenario>,
    pub kinds: Vec<FeatureKind>,
    pub dims: Vec<usize>,
    pub isdn: bool,
    pub features: FeatureConfig,
    pub scoring: ScoringOptions,
    pub dcf: DcfParams,
    pub bwe_k: usize,
    pub bwe_seed: u64,
    pub bwe_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub manifest_sha256: String,
    /// Hash over `(utterance id, file hash)` in manifest order.
    pub audio_sha256: String,
    pub speakers: usize,
    pub train_utterances: usize,
    pub test_utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: Scenario,
    pub kind: FeatureKind,
    pub dim: usize,
    pub min_dcf: f64,
    /// `None` when the best operating point rejects every trial.
    pub min_dcf_threshold: Option<f64>,
    pub eer: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    /// DET files relative to the output directory.
    pub det_csv: String,
    pub det_svg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub kind: FeatureKind,
    pub dim: usize,
    pub narrow: f64,
    pub extended: f64,
    /// `(extended - narrow) / narrow`; negative means extension helped.
    /// `None` when the narrowband cost is zero.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    pub settings: Settings,
    pub inputs: BTreeMap<Scenario, InputDigest>,
    /// Hashes of model files the inputs depend on.
    pub models: BTreeMap<String, String>,
    pub cells: Vec<Cell>,
    pub extended_vs_narrow: Vec<RelativeChange>,
}

impl Report {
    pub fn cell(&self, scenario: Scenario, kind: FeatureKind, dim: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.scenario == scenario && c.kind == kind && c.dim == dim)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    /// Min-DCF table: one row per dimension, one column group per feature
    /// kind, one column per scenario.
    pub fn to_table(&self) -> String {
        let s = &self.settings;
        let with_change = s.scenarios.contains(&Scenario::Narrow) && s.scenarios.contains(&Scenario::Extended);
        let group_width = 9 * s.scenarios.len() + if with_change { 10 } else { 0 };
        let mut out = String::new();
        let _ = writeln!(out, "Minimum DCF (C_miss {}, C_fa {}, P_true {})", s.dcf.c_miss, s.dcf.c_fa, s.dcf.p_true);
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        out.push('\n');
        let _ = write!(out, "{:>4}", "");
        for k in &s.kinds {
            let _ = write!(out, " |{:^group_width$}", k.name().to_uppercase());
        }
        out.push('\n');
        let _ = write!(out, "{:>4}", "l");
        for _ in &s.kinds {
            out.push_str(" |");
            for sc in &s.scenarios {
                let _ = write!(out, "{:>9}", sc.name());
            }
            if with_change {
                let _ = write!(out, "{:>10}", "ext/nar");
            }
        }
        out.push('\n');
        for &dim in &s.dims {
            let _ = write!(out, "{dim:>4}");
            for &kind in &s.kinds {
                out.push_str(" |");
                for &sc in &s.scenarios {
                    match self.cell(sc, kind, dim) {
                        Some(c) => {
                            let _ = write!(out, "{:>9.4}", c.min_dcf);
                        }
                        None => {
                            let _ = write!(out, "{:>9}", "-");
                        }
                    }
                }
                if with_change {
                    let change = self.extended_vs_narrow.iter().find(|r| r.kind == kind && r.dim == dim).and_then(|r| r.change);
                    match change {
                        Some(v) => {
                            let _ = write!(out, "{:>+9.1}%", 100.0 * v);
                        }
                        None => {
                            let _ = write!(out, "{:>10}", "n/a");
                        }
                    }
                }
            }
            out.push('\n');
        }
        if with_change {
            out.push_str("\next/nar: relative change of min DCF, extended against narrow (negative is better)\n");
        }
        out
    }
}

/// Manifest of each requested scenario, deriving missing ones.
fn prepare_corpora(config: &ExperimentConfig, models: &mut BTreeMap<String, String>) -> CliResult<BTreeMap<Scenario, PathBuf>> {
    let wants = |s| config.scenarios.contains(&s);
    let corpora_dir = config.out_dir.join("corpora");
    let mut out = BTreeMap::new();
    if wants(Scenario::Wide) {
        out.insert(Scenario::Wide, config.corpora.wide.clone().expect("validated"));
    }
    let need_narrow = wants(Scenario::Narrow) || (wants(Scenario::Extended) && config.corpora.extended.is_none());
    let narrow = match (&config.corpora.narrow, need_narrow) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => {
            let wide = config.corpora.wide.as_ref().expect("validated");
            let dir = corpora_dir.join("narrow");
            log::info!("deriving the narrow corpus into {}", dir.display());
            commands::narrowband_manifest(wide, &dir, config.isdn)?;
            Some(dir.join(commands::MANIFEST_NAME))
        }
        (None, false) => None,
    };
    if wants(Scenario::Narrow) {
        out.insert(Scenario::Narrow, narrow.clone().expect("derived above"));
    }
    if wants(Scenario::Extended) {
        let path = match &config.corpora.extended {
            Some(p) => p.clone(),
            None => {
                let model = match (&config.bwe.model, &config.bwe.train_manifest) {
                    (Some(m), _) => m.clone(),
                    (None, Some(train)) => {
                        let path = config.out_dir.join("models").join("bwe.json");
                        log::info!("training the extension model into {}", path.display());
                        let train_config = BweTrainConfig { em: EmConfig::with_k(config.bwe.k, config.bwe.seed), ..BweTrainConfig::default() };
                        commands::train_bwe(train, &train_config, &path)?;
                        path
                    }
                    (None, None) => unreachable!("validated"),
                };
                let dir = corpora_dir.join("extended");
                let depth = if config.isdn { BitDepth::Alaw8 } else { BitDepth::Pcm16 };
                log::info!("extending the narrow corpus into {}", dir.display());
                commands::extend_corpus(narrow.as_ref().expect("derived above"), &model, config.bwe.lambda, depth, &dir)?;
                dir.join(commands::MANIFEST_NAME)
            }
        };
        // an extended corpus records the model it came from
        let summary = path.parent().map(|d| d.join(EXTEND_SUMMARY_NAME));
        if let Some(s) = summary.filter(|s| s.exists()) {
            let text = fs::read_to_string(&s).map_err(CliError::io(&s))?;
            let summary: ExtendSummary = serde_json::from_str(&text)?;
            models.insert("bwe".into(), summary.model_sha256);
        }
        out.insert(Scenario::Extended, path);
    }
    Ok(out)
}

fn digest_inputs(manifest_path: &Path) -> CliResult<InputDigest> {
    let manifest = load_manifest(manifest_path)?;
    let hashes = manifest.entries().par_iter().map(|e| file_sha256(&manifest.resolve(e))).collect::<CliResult<Vec<_>>>()?;
    let audio_sha256 = combine(manifest.entries().iter().zip(&hashes).map(|(e, h)| (e.utt.as_str(), h.as_bytes())));
    Ok(InputDigest {
        manifest_sha256: file_sha256(manifest_path)?,
        audio_sha256,
        speakers: manifest.speakers().len(),
        train_utterances: manifest.with_role(Role::Train).count(),
        test_utterances: manifest.with_role(Role::Test).count(),
    })
}

/// Runs every (scenario, kind, dimension) cell and writes `report.json`,
/// `report.txt`, trial lists and DET plots under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Report> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(CliError::io(&config.out_dir))?;
    let mut models = BTreeMap::new();
    let corpora = prepare_corpora(config, &mut models)?;

    let mut inputs = BTreeMap::new();
    let mut cells = Vec::new();
    for &scenario in &config.scenarios {
        let path = &corpora[&scenario];
        let manifest = load_manifest(path).map_err(|e| CliError::Config(format!("scenario {}: {e}", scenario.name())))?;
        let digest = digest_inputs(path)?;
        if digest.train_utterances == 0 || digest.test_utterances == 0 {
            return Err(CliError::Config(format!("scenario {}: {} needs both train and test utterances", scenario.name(), path.display())));
        }
        inputs.insert(scenario, digest);
        for &kind in &config.kinds {
            log::info!("scenario {} features {}", scenario.name(), kind);
            let feats = corpus_features(&manifest, kind, &config.dims, &config.features)?;
            let scenario_cells = config
                .dims
                .par_iter()
                .enumerate()
                .map(|(i, &dim)| {
                    let refs: Vec<&FeatureSequence> = feats.iter().map(|f| &f[i]).collect();
                    let speaker = speaker_models(manifest.entries(), &refs, config.scoring.mean_removal)?;
                    let trials = score_trials(&speaker, &test_utterances(manifest.entries(), &refs), config.scoring)?;
                    let (targets, nontargets) = split_scores(&trials);
                    let curve = det_curve(&targets, &nontargets)?;
                    let stem = format!("{}_{}_l{dim}", scenario.name(), kind.name());
                    let trials_dir = config.out_dir.join("trials");
                    fs::create_dir_all(&trials_dir).map_err(CliError::io(&trials_dir))?;
                    let trials_path = trials_dir.join(format!("{stem}.csv"));
                    fs::write(&trials_path, trials_to_csv(&trials)).map_err(CliError::io(&trials_path))?;
                    export_det(&curve, &config.dcf, &config.out_dir.join("det"), &stem)?;
                    let summary = summarize(&curve, &config.dcf);
                    Ok(Cell {
                        scenario,
                        kind,
                        dim,
                        min_dcf: summary.min_dcf.value,
                        min_dcf_threshold: summary.min_dcf.threshold,
                        eer: summary.eer,
                        n_target: summary.n_target,
                        n_nontarget: summary.n_nontarget,
                        det_csv: format!("det/{stem}.csv"),
                        det_svg: format!("det/{stem}.svg"),
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            cells.extend(scenario_cells);
        }
    }

    let mut extended_vs_narrow = Vec::new();
    for &kind in &config.kinds {
        for &dim in &config.dims {
            let find = |s: Scenario| cells.iter().find(|c: &&Cell| c.scenario == s && c.kind == kind && c.dim == dim).map(|c| c.min_dcf);
            if let (Some(narrow), Some(extended)) = (find(Scenario::Narrow), find(Scenario::Extended)) {
                let change = (narrow > 0.0).then(|| (extended - narrow) / narrow);
                extended_vs_narrow.push(RelativeChange { kind, dim, narrow, extended, change });
            }
        }
    }

    let settings = config.settings();
    let settings_json = serde_json::to_string(&settings)?;
    let mut parts: Vec<(String, Vec<u8>)> = vec![("settings".into(), settings_json.into_bytes())];
    for (s, d) in &inputs {
        parts.push((format!("input:{}", s.name()), format!("{}:{}", d.manifest_sha256, d.audio_sha256).into_bytes()));
    }
    for (name, h) in &models {
        parts.push((format!("model:{name}"), h.clone().into_bytes()));
    }
    let fingerprint = combine(parts.iter().map(|(l, b)| (l.as_str(), b.as_slice())));

    let report = Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        fingerprint,
        settings,
        inputs,
        models,
        cells,
        extended_vs_narrow,
    };
    let json_path = config.out_dir.join("report.json");
    fs::write(&json_path, report.to_json()).map_err(CliError::io(&json_path))?;
    let txt_path = config.out_dir.join("report.txt");
    fs::write(&txt_path, report.to_table()).map_err(CliError::io(&txt_path))?;
    log::info!("report {} ({})", json_path.display(), sha256_hex(report.to_json().as_bytes()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::new("wide/manifest.jsonl", "out")
    }

    #[test]
    fn defaults_validate() {
        let mut c = config();
        c.bwe.train_manifest = Some("train/manifest.jsonl".into());
        c.validate().unwrap();
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let mut with_model = config();
        with_model.bwe.model = Some("bwe.json".into());
        let broken: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.dims = vec![3]),
            Box::new(|c| c.dims = vec![12, 12]),
            Box::new(|c| c.kinds.clear()),
            Box::new(|c| c.bwe.lambda = 0.5),
            Box::new(|c| c.bwe.k = 0),
            Box::new(|c| c.dcf.p_true = 1.0),
            Box::new(|c| c.corpora.wide = None),
        ];
        for (i, f) in broken.iter().enumerate() {
            let mut c = with_model.clone();
            f(&mut c);
            let err = c.validate().unwrap_err();
            assert_eq!(err.exit_code(), 2, "case {i}: {err}");
        }
        // the extended scenario has no way to get a model
        assert_eq!(config().validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn narrow_only_needs_no_model() {
        let mut c = config();
        c.scenarios = vec![Scenario::Wide, Scenario::Narrow];
        c.validate().unwrap();
    }

    #[test]
    fn load_resolves_relative_paths_and_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, r#"{"corpora": {"wide": "w/manifest.jsonl"}, "out_dir": "/abs/out", "dims": [4, 27]}"#).unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.corpora.wide.unwrap(), dir.path().join("w/manifest.jsonl"));
        assert_eq!(c.out_dir, PathBuf::from("/abs/out"));
        assert_eq!(c.dims, vec![4, 27]);
        assert_eq!(c.scenarios, Scenario::ALL.to_vec());

        fs::write(&path, r#"{"corpora": {}, "out_dir": "o", "dimz": [4]}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn settings_ignore_locations() {
        let mut a = config();
        let mut b = ExperimentConfig::new("elsewhere.jsonl", "other");
        a.bwe.model = Some("a.json".into());
        b.bwe.model = Some("b.json".into());
        assert_eq!(serde_json::to_string(&a.settings()).unwrap(), serde_json::to_string(&b.settings()).unwrap());
    }
}
