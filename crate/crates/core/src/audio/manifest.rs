//! JSON-lines corpus manifests, one utterance per line:
//!
//! ```text
//! {"utt":"spk00_train","spk":"spk00","path":"spk00_train.wav","role":"train","scenario":"wide"}
//! ```
//!
//! Relative paths resolve against the directory holding the manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt: String,
    pub spk: String,
    pub path: String,
    pub role: Role,
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl CorpusManifest {
    /// Validates entries: utterance ids unique, and every speaker with a
    /// test entry also has a train entry.
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.utt.as_str()) {
                return Err(Error::Manifest(format!("duplicate utterance id {:?} at entry {}", e.utt, i + 1)));
            }
        }
        let trained: HashSet<&str> =
            entries.iter().filter(|e| e.role == Role::Train).map(|e| e.spk.as_str()).collect();
        let untrained: BTreeSet<&str> = entries
            .iter()
            .filter(|e| e.role == Role::Test && !trained.contains(e.spk.as_str()))
            .map(|e| e.spk.as_str())
            .collect();
        if let Some(spk) = untrained.first() {
            return Err(Error::Manifest(format!("speaker {spk:?} has test entries but no train entry")));
        }
        Ok(Self { entries, base_dir: base_dir.into() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", lineno + 1)))?;
            entries.push(entry);
        }
        Self::new(entries, base_dir)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Speaker ids in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.spk.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Entries grouped by speaker, speakers sorted, entries in manifest order.
    pub fn by_speaker(&self, role: Role) -> BTreeMap<String, Vec<&ManifestEntry>> {
        let mut map: BTreeMap<String, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in self.with_role(role) {
            map.entry(e.spk.clone()).or_default().push(e);
        }
        map
    }
}
