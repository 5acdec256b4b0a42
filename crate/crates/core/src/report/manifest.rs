use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Gap, ReportError};
use crate::digest::sha256_file;
use crate::evalgen::Framing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Corpus,
    Config,
    Stats,
    Snapshot,
    Embedding,
    Lexicon,
    Suite,
    Results,
    Journal,
    Sheet,
    Key,
    Judgments,
    Scores,
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub sha256: String,
    pub produced_by: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub args: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub status: i32,
}

/// Everything a pipeline has produced so far, with digests.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunManifest {
    pub version: u32,
    pub seed: Option<u64>,
    pub models: Vec<String>,
    pub framings: Vec<Framing>,
    pub suites: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub artifacts: Vec<Artifact>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl RunManifest {
    pub fn new() -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            ..Default::default()
        }
    }

    /// Loads `path`, or starts an empty manifest when it does not exist.
    pub fn load_or_new(path: &Path) -> Result<Self, ReportError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ReportError::Manifest(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(RunManifest::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ReportError::Manifest(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn resolve(base: &Path, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    fn relative(base: &Path, path: &Path) -> String {
        let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        let (b, p) = (abs(base), abs(path));
        p.strip_prefix(&b).map(|r| r.to_string_lossy().into_owned()).unwrap_or_else(|_| p.to_string_lossy().into_owned())
    }

    /// Records (or refreshes) an artifact with its current digest.
    pub fn record_artifact(&mut self, base: &Path, kind: ArtifactKind, path: &Path, produced_by: &str) -> Result<(), ReportError> {
        let sha256 = sha256_file(path)?;
        let rel = Self::relative(base, path);
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            kind,
            path: rel,
            sha256,
            produced_by: produced_by.to_string(),
        });
        Ok(())
    }

    pub fn artifacts_of(&self, kind: ArtifactKind) -> impl Iterator<Item = &Artifact> {
        self.artifacts.iter().filter(move |a| a.kind == kind)
    }

    /// Checks that every artifact exists and still has its recorded digest.
    pub fn verify(&self, base: &Path) -> Vec<Gap> {
        let mut gaps = Vec::new();
        for a in &self.artifacts {
            let reason = match sha256_file(&Self::resolve(base, &a.path)) {
                Ok(d) if d == a.sha256 => continue,
                Ok(_) => "digest mismatch".to_string(),
                Err(e) => format!("unreadable: {e}"),
            };
            gaps.push(Gap {
                path: a.path.clone(),
                kind: a.kind,
                reason,
            });
        }
        gaps
    }

    pub fn note<T: PartialEq + Clone>(list: &mut Vec<T>, items: impl IntoIterator<Item = T>) {
        for item in items {
            if !list.contains(&item) {
                list.push(item);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_verifies_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("lexicon.csv");
        std::fs::write(&file, "word\n").unwrap();
        let mut m = RunManifest::new();
        m.record_artifact(dir.path(), ArtifactKind::Lexicon, &file, "induce").unwrap();
        m.record_artifact(dir.path(), ArtifactKind::Lexicon, &file, "induce").unwrap();
        assert_eq!(m.artifacts.len(), 1);
        assert_eq!(m.artifacts[0].path, "lexicon.csv");
        assert!(m.verify(dir.path()).is_empty());
        std::fs::write(&file, "changed\n").unwrap();
        assert_eq!(m.verify(dir.path())[0].reason, "digest mismatch");
        std::fs::remove_file(&file).unwrap();
        assert!(m.verify(dir.path())[0].reason.starts_with("unreadable"));

        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load_or_new(&path).unwrap(), m);
        assert_eq!(RunManifest::load_or_new(&dir.path().join("none.json")).unwrap(), RunManifest::new());
    }
}
