//! One function per subcommand. Batch commands process files in parallel
//! but always write and return results in input order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bwsv::audio::{read_wav, write_wav, BitDepth, CorpusManifest, ManifestEntry, Role};
use bwsv::bwe::{extend, train_bwe_model, BweModel, BweTrainConfig, NB_RATE_HZ, WB_RATE_HZ};
use bwsv::eval::{det_curve, export_det, summarize, DcfParams, DetSummary};
use bwsv::features::{FeatureConfig, FeatureKind, FeatureSequence};
use bwsv::filters::{downsample_2x, potsband};
use bwsv::synth::{corpus_plan, synthesize_planned, CorpusSpec};
use bwsv::verify::{score_trials, split_scores, trials_from_csv, trials_to_csv, ScoringOptions, SpeakerModel, SphericityForm, TestUtterance, Trial};
use bwsv::AudioBuffer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::{file_sha256, sha256_hex};
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const EXTEND_SUMMARY_NAME: &str = "extend_summary.json";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn load_manifest(path: &Path) -> CliResult<CorpusManifest> {
    CorpusManifest::load(path).map_err(CliError::file(path))
}

fn read_audio(path: &Path) -> CliResult<AudioBuffer> {
    read_wav(path).map_err(CliError::file(path))
}

fn write_audio(buffer: &AudioBuffer, path: &Path, depth: BitDepth) -> CliResult<usize> {
    let summary = write_wav(buffer, path, depth).map_err(CliError::file(path))?;
    if summary.clipped > 0 {
        log::warn!("{}: {} samples clipped", path.display(), summary.clipped);
    }
    Ok(summary.clipped)
}

/// Runs `job` over `items` in parallel. Failures are logged; the result
/// keeps input order with `None` in failed slots.
fn run_batch<T: Sync, R: Send>(items: &[T], label: impl Fn(&T) -> String + Sync, job: impl Fn(&T) -> CliResult<R> + Sync) -> (Vec<Option<R>>, usize) {
    let results: Vec<Option<R>> = items
        .par_iter()
        .map(|item| match job(item) {
            Ok(r) => Some(r),
            Err(e) => {
                log::error!("{}: {e}", label(item));
                None
            }
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    (results, failed)
}

fn partial(failed: usize, total: usize) -> CliResult<()> {
    if failed > 0 {
        Err(CliError::Partial { failed, total })
    } else {
        Ok(())
    }
}

/// Writes a manifest of the entries that made it through a batch. A
/// manifest that would no longer validate is skipped with a warning.
fn write_manifest(entries: Vec<ManifestEntry>, out_dir: &Path) -> CliResult<Option<PathBuf>> {
    match CorpusManifest::new(entries, out_dir) {
        Ok(m) => {
            let path = out_dir.join(MANIFEST_NAME);
            m.save(&path).map_err(CliError::file(&path))?;
            Ok(Some(path))
        }
        Err(e) => {
            log::warn!("no manifest written to {}: {e}", out_dir.display());
            Ok(None)
        }
    }
}

fn retag(entry: &ManifestEntry, scenario: &str) -> ManifestEntry {
    ManifestEntry { path: format!("{}.wav", entry.utt), scenario: scenario.into(), ..entry.clone() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOutcome {
    pub written: usize,
    pub manifest: Option<PathBuf>,
}

/// Telephone channel: potsband, and for the ISDN variant also 8 kHz A-law.
pub fn telephone_channel(buffer: &AudioBuffer, with_alaw: bool) -> CliResult<(AudioBuffer, BitDepth)> {
    let band = potsband(buffer)?;
    if !with_alaw {
        return Ok((band, BitDepth::Pcm16));
    }
    let at_8k = match band.sample_rate_hz() {
        NB_RATE_HZ => band,
        WB_RATE_HZ => downsample_2x(&band)?,
        other => return Err(CliError::Config(format!("A-law output needs 8 or 16 kHz input, got {other} Hz"))),
    };
    Ok((at_8k, BitDepth::Alaw8))
}

pub fn narrowband_scenario(with_alaw: bool) -> &'static str {
    if with_alaw {
        "narrow-alaw"
    } else {
        "narrow"
    }
}

fn band_limit_batch(jobs: &[(PathBuf, String)], out_dir: &Path, with_alaw: bool) -> (Vec<Option<usize>>, usize) {
    run_batch(
        jobs,
        |(src, _)| src.display().to_string(),
        |(src, name)| {
            let (out, depth) = telephone_channel(&read_audio(src)?, with_alaw)?;
            write_audio(&out, &out_dir.join(name), depth)
        },
    )
}

/// Band-limits every utterance of a manifest into `out_dir` and writes
/// the matching manifest there.
pub fn narrowband_manifest(manifest_path: &Path, out_dir: &Path, with_alaw: bool) -> CliResult<BatchOutcome> {
    let manifest = load_manifest(manifest_path)?;
    create_dir(out_dir)?;
    let jobs: Vec<(PathBuf, String)> = manifest.entries().iter().map(|e| (manifest.resolve(e), format!("{}.wav", e.utt))).collect();
    if jobs.is_empty() {
        log::warn!("{}: no audio to process", manifest_path.display());
    }
    let (results, failed) = band_limit_batch(&jobs, out_dir, with_alaw);
    let tag = narrowband_scenario(with_alaw);
    let kept = manifest.entries().iter().zip(&results).filter(|(_, r)| r.is_some()).map(|(e, _)| retag(e, tag)).collect();
    let written = write_manifest(kept, out_dir)?;
    partial(failed, jobs.len())?;
    Ok(BatchOutcome { written: jobs.len(), manifest: written })
}

/// Band-limits every WAV of `in_dir` into `out_dir`. A manifest in
/// `in_dir` drives the batch when present; otherwise all `*.wav` files are
/// processed by name and no manifest is written.
pub fn narrowband(in_dir: &Path, out_dir: &Path, with_alaw: bool) -> CliResult<BatchOutcome> {
    if !in_dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", in_dir.display())));
    }
    let manifest_path = in_dir.join(MANIFEST_NAME);
    if manifest_path.exists() {
        return narrowband_manifest(&manifest_path, out_dir, with_alaw);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(in_dir)
        .map_err(CliError::io(in_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        log::warn!("{}: no audio to process", in_dir.display());
        return Ok(BatchOutcome { written: 0, manifest: None });
    }
    create_dir(out_dir)?;
    let jobs: Vec<(PathBuf, String)> = files.into_iter().map(|p| (p.clone(), p.file_name().unwrap().to_string_lossy().into_owned())).collect();
    let (_, failed) = band_limit_batch(&jobs, out_dir, with_alaw);
    partial(failed, jobs.len())?;
    Ok(BatchOutcome { written: jobs.len(), manifest: None })
}

/// Trains an extension model on every utterance of a 16 kHz manifest and
/// writes it as JSON. Returns the model and the SHA-256 of the file.
pub fn train_bwe(manifest_path: &Path, config: &BweTrainConfig, model_out: &Path) -> CliResult<(BweModel, String)> {
    let manifest = load_manifest(manifest_path)?;
    if manifest.entries().is_empty() {
        return Err(CliError::Config(format!("{} lists no audio", manifest_path.display())));
    }
    let (audio, failed) = run_batch(manifest.entries(), |e| e.utt.clone(), |e| read_audio(&manifest.resolve(e)));
    partial(failed, manifest.entries().len())?;
    let audio: Vec<AudioBuffer> = audio.into_iter().flatten().collect();
    if let Some(bad) = audio.iter().find(|a| a.sample_rate_hz() != WB_RATE_HZ) {
        return Err(CliError::Config(format!("extension training needs 16 kHz audio, found {} Hz", bad.sample_rate_hz())));
    }
    let model = train_bwe_model(&audio, config)?;
    if let Some(report) = model.training() {
        log::info!(
            "extension model: {} iterations, converged {}, mean log-likelihood {:?}",
            report.iterations,
            report.converged,
            report.loglik_trace.last()
        );
    }
    let json = model.to_json();
    if let Some(dir) = model_out.parent() {
        create_dir(dir)?;
    }
    write_text(model_out, &json)?;
    Ok((model, sha256_hex(json.as_bytes())))
}

pub fn load_bwe_model(path: &Path) -> CliResult<BweModel> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    BweModel::from_json(&text).map_err(CliError::file(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedFile {
    pub utt: String,
    /// Telephone-band SNR of the output against the input; `None` for a
    /// silent input.
    pub nb_snr_db: Option<f64>,
    pub clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendSummary {
    pub model_sha256: String,
    pub lambda: f64,
    pub depth: BitDepth,
    pub files: Vec<ExtendedFile>,
}

/// `10 log10(|reference|^2 / |reference - test|^2)` in the telephone band
/// of both signals at 8 kHz.
pub fn narrowband_snr_db(nb: &AudioBuffer, extended: &AudioBuffer) -> CliResult<Option<f64>> {
    let reference = potsband(nb)?;
    let back = potsband(&downsample_2x(extended)?)?;
    let signal: f64 = reference.energy();
    let noise: f64 = reference.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((signal > 0.0).then(|| 10.0 * (signal / noise).log10()))
}

/// Narrowband input for the extender: 8 kHz as is, 16 kHz band-limited
/// audio decimated first.
fn as_narrowband(buffer: AudioBuffer) -> CliResult<AudioBuffer> {
    match buffer.sample_rate_hz() {
        NB_RATE_HZ => Ok(buffer),
        WB_RATE_HZ => Ok(downsample_2x(&buffer)?),
        other => Err(CliError::Config(format!("cannot extend {other} Hz audio"))),
    }
}

/// Extends every utterance of a narrowband manifest to 16 kHz.
pub fn extend_corpus(manifest_path: &Path, model_path: &Path, lambda: f64, depth: BitDepth, out_dir: &Path) -> CliResult<ExtendSummary> {
    if !(lambda >= 1.0) {
        return Err(CliError::Config(format!("lambda must be at least 1, got {lambda}")));
    }
    let manifest = load_manifest(manifest_path)?;
    let model = load_bwe_model(model_path)?;
    let model_sha256 = file_sha256(model_path)?;
    create_dir(out_dir)?;
    let (results, failed) = run_batch(
        manifest.entries(),
        |e| e.utt.clone(),
        |e| {
            let nb = as_narrowband(read_audio(&manifest.resolve(e))?)?;
            let ext = extend(&nb, &model, lambda)?;
            let nb_snr_db = narrowband_snr_db(&nb, &ext.output)?;
            let clipped = write_audio(&ext.output, &out_dir.join(format!("{}.wav", e.utt)), depth)?;
            Ok(ExtendedFile { utt: e.utt.clone(), nb_snr_db, clipped })
        },
    );
    let kept = manifest.entries().iter().zip(&results).filter(|(_, r)| r.is_some()).map(|(e, _)| retag(e, "extended")).collect();
    write_manifest(kept, out_dir)?;
    let summary = ExtendSummary { model_sha256, lambda, depth, files: results.into_iter().flatten().collect() };
    let path = out_dir.join(EXTEND_SUMMARY_NAME);
    write_text(&path, &serde_json::to_string_pretty(&summary)?)?;
    partial(failed, manifest.entries().len())?;
    Ok(summary)
}

/// Features of one WAV file written as CSV.
pub fn features(input: &Path, kind: FeatureKind, dim: usize, config: &FeatureConfig, out: &Path) -> CliResult<FeatureSequence> {
    let seq = config.extract(&read_audio(input)?, kind, dim)?;
    write_text(out, &seq.to_csv())?;
    Ok(seq)
}

/// Per-utterance features for several dimensions at once, in manifest
/// order. Any unreadable file fails the whole call after all are tried.
pub fn corpus_features(manifest: &CorpusManifest, kind: FeatureKind, dims: &[usize], config: &FeatureConfig) -> CliResult<Vec<Vec<FeatureSequence>>> {
    entry_features(manifest, manifest.entries(), kind, dims, config)
}

fn entry_features(manifest: &CorpusManifest, entries: &[ManifestEntry], kind: FeatureKind, dims: &[usize], config: &FeatureConfig) -> CliResult<Vec<Vec<FeatureSequence>>> {
    let (results, failed) = run_batch(entries, |e| e.utt.clone(), |e| Ok(config.extract_many(&read_audio(&manifest.resolve(e))?, kind, dims)?));
    partial(failed, entries.len())?;
    Ok(results.into_iter().flatten().collect())
}

/// One model per speaker from the concatenated frames of its training
/// utterances; speakers in sorted order.
pub fn speaker_models(entries: &[ManifestEntry], features: &[&FeatureSequence], mean_removal: bool) -> CliResult<Vec<SpeakerModel>> {
    let mut by_speaker: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let (mut kind, mut dim) = (None, 0);
    for (e, f) in entries.iter().zip(features) {
        if e.role == Role::Train {
            by_speaker.entry(e.spk.as_str()).or_default().extend(f.vectors().iter().cloned());
            kind = Some(f.kind());
            dim = f.dim();
        }
    }
    let Some(kind) = kind else {
        return Err(CliError::Config("manifest has no training utterances".into()));
    };
    by_speaker
        .into_par_iter()
        .map(|(spk, vectors)| Ok(SpeakerModel::train(spk, &FeatureSequence::new(kind, dim, vectors)?, mean_removal)?))
        .collect()
}

pub fn test_utterances(entries: &[ManifestEntry], features: &[&FeatureSequence]) -> Vec<TestUtterance> {
    entries
        .iter()
        .zip(features)
        .filter(|(e, _)| e.role == Role::Test)
        .map(|(e, f)| TestUtterance { utterance_id: e.utt.clone(), speaker_id: e.spk.clone(), features: (*f).clone() })
        .collect()
}

/// Trains one model per speaker and saves them as `<speaker>.json`.
pub fn train_speakers(manifest_path: &Path, kind: FeatureKind, dim: usize, config: &FeatureConfig, mean_removal: bool, out_dir: &Path) -> CliResult<Vec<SpeakerModel>> {
    let manifest = load_manifest(manifest_path)?;
    let feats = corpus_features(&manifest, kind, &[dim], config)?;
    let refs: Vec<&FeatureSequence> = feats.iter().map(|f| &f[0]).collect();
    let models = speaker_models(manifest.entries(), &refs, mean_removal)?;
    create_dir(out_dir)?;
    for m in &models {
        let path = out_dir.join(format!("{}.json", m.speaker_id()));
        m.save(&path).map_err(CliError::file(&path))?;
    }
    Ok(models)
}

/// All `*.json` speaker models of a directory, sorted by file name.
pub fn load_speaker_models(dir: &Path) -> CliResult<Vec<SpeakerModel>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let models = paths.iter().map(|p| SpeakerModel::load(p).map_err(CliError::file(p))).collect::<CliResult<Vec<_>>>()?;
    if models.is_empty() {
        return Err(CliError::Config(format!("no speaker models in {}", dir.display())));
    }
    Ok(models)
}

/// Scores the test utterances of a manifest against saved speaker models
/// and writes the trial list as CSV.
pub fn score(models_dir: &Path, manifest_path: &Path, config: &FeatureConfig, form: SphericityForm, out: &Path) -> CliResult<Vec<Trial>> {
    let models = load_speaker_models(models_dir)?;
    let (kind, dim, mean_removal) = (models[0].kind(), models[0].dim(), models[0].mean_removed());
    if models.iter().any(|m| m.kind() != kind || m.dim() != dim || m.mean_removed() != mean_removal) {
        return Err(CliError::Config(format!("models in {} disagree on kind, dimension or mean removal", models_dir.display())));
    }
    let manifest = load_manifest(manifest_path)?;
    let tests: Vec<ManifestEntry> = manifest.with_role(Role::Test).cloned().collect();
    let feats = entry_features(&manifest, &tests, kind, &[dim], config)?;
    let refs: Vec<&FeatureSequence> = feats.iter().map(|f| &f[0]).collect();
    let trials = score_trials(&models, &test_utterances(&tests, &refs), ScoringOptions { mean_removal, form })?;
    write_text(out, &trials_to_csv(&trials))?;
    Ok(trials)
}

/// DET curve of a trial list: `<stem>.csv`, `<stem>.svg` and a summary in
/// `<stem>.json`.
pub fn det(trials_csv: &Path, params: &DcfParams, out_dir: &Path, stem: &str) -> CliResult<DetSummary> {
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let text = fs::read_to_string(trials_csv).map_err(CliError::io(trials_csv))?;
    let trials = trials_from_csv(&text).map_err(CliError::file(trials_csv))?;
    let (targets, nontargets) = split_scores(&trials);
    let curve = det_curve(&targets, &nontargets)?;
    export_det(&curve, params, out_dir, stem)?;
    let summary = summarize(&curve, params);
    write_text(&out_dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Writes a synthetic 16 kHz corpus as PCM16 WAVs plus a manifest.
pub fn synth_corpus(spec: &CorpusSpec, out_dir: &Path) -> CliResult<CorpusManifest> {
    if spec.n_speakers < 2 {
        return Err(CliError::Config(format!("a corpus needs at least 2 speakers, got {}", spec.n_speakers)));
    }
    if spec.utterances_per_speaker == 0 || !(spec.train_secs > 0.0 && spec.test_secs > 0.0) {
        return Err(CliError::Config("utterance count and durations must be positive".into()));
    }
    create_dir(out_dir)?;
    let jobs: Vec<_> = corpus_plan(spec)
        .into_iter()
        .flat_map(|(spk, voice, utts)| utts.into_iter().map(move |(utt, is_train, seed)| (spk.clone(), voice.clone(), utt, is_train, seed)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|(spk, voice, utt, is_train, seed)| {
            let audio = synthesize_planned(voice, *is_train, *seed, spec);
            let path = format!("{utt}.wav");
            write_audio(&audio, &out_dir.join(&path), BitDepth::Pcm16)?;
            let role = if *is_train { Role::Train } else { Role::Test };
            Ok(ManifestEntry { utt: utt.clone(), spk: spk.clone(), path, role, scenario: "wide".into() })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = CorpusManifest::new(entries, out_dir)?;
    let path = out_dir.join(MANIFEST_NAME);
    manifest.save(&path).map_err(CliError::file(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus(dir: &Path) -> CorpusManifest {
        let spec = CorpusSpec { n_speakers: 2, utterances_per_speaker: 2, train_secs: 1.0, test_secs: 0.5, seed: 5 };
        synth_corpus(&spec, dir).unwrap()
    }

    #[test]
    fn synth_corpus_rejects_a_single_speaker() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec { n_speakers: 1, ..CorpusSpec::default() };
        assert_eq!(synth_corpus(&spec, dir.path()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn narrowband_retags_every_entry() {
        let dir = tempfile::tempdir().unwrap();
        let wide = tiny_corpus(&dir.path().join("wide"));
        for alaw in [false, true] {
            let out = dir.path().join(narrowband_scenario(alaw));
            let outcome = narrowband(&dir.path().join("wide"), &out, alaw).unwrap();
            assert_eq!(outcome.written, wide.entries().len());
            let nb = load_manifest(&outcome.manifest.unwrap()).unwrap();
            assert!(nb.entries().iter().all(|e| e.scenario == narrowband_scenario(alaw)));
            let rate = read_audio(&nb.resolve(&nb.entries()[0])).unwrap().sample_rate_hz();
            assert_eq!(rate, if alaw { NB_RATE_HZ } else { WB_RATE_HZ });
        }
    }

    #[test]
    fn missing_input_directory_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = narrowband(&dir.path().join("absent"), &dir.path().join("out"), false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn a_broken_file_fails_the_batch_partially() {
        let dir = tempfile::tempdir().unwrap();
        let wide = tiny_corpus(&dir.path().join("wide"));
        let victim = wide.resolve(&wide.entries()[1]);
        fs::write(&victim, b"not a wav").unwrap();
        let out = dir.path().join("narrow");
        let err = narrowband(&dir.path().join("wide"), &out, false).unwrap_err();
        assert!(matches!(err, CliError::Partial { failed: 1, total: 4 }), "{err}");
        assert_eq!(err.exit_code(), 1);
        // survivors are still written, in order
        let written: Vec<String> = load_manifest(&out.join(MANIFEST_NAME)).unwrap().entries().iter().map(|e| e.utt.clone()).collect();
        let expect: Vec<String> = wide.entries().iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, e)| e.utt.clone()).collect();
        assert_eq!(written, expect);
    }

    #[test]
    fn bwe_training_needs_wideband_input() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(&dir.path().join("wide"));
        let out = dir.path().join("alaw");
        let nb = narrowband(&dir.path().join("wide"), &out, true).unwrap().manifest.unwrap();
        let err = train_bwe(&nb, &BweTrainConfig::default(), &dir.path().join("m.json")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
