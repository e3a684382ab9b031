use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{sha256_file, write_file};
use crate::traversal::SynthesisReport;

pub const MANIFEST_NAME: &str = "manifest.json";

/// A file produced by a stage, relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub started: String,
    pub finished: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationSummary {
    pub validation_accuracy: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub extrapolated: usize,
    pub changed: usize,
}

/// Index of one run directory. Everything except `stages` is a pure function of the config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Config snapshot in `key = value` form.
    pub config: String,
    pub master_seed: u64,
    /// Derived seed of every model role.
    pub seeds: BTreeMap<String, u64>,
    pub partition_checksums: BTreeMap<String, String>,
    pub extrapolation: Option<ExtrapolationSummary>,
    pub checkpoints: BTreeMap<String, ArtifactRef>,
    pub reports: BTreeMap<String, ArtifactRef>,
    pub other_artifacts: BTreeMap<String, ArtifactRef>,
    /// Acceptance-filter statistics per strategy.
    pub synthesis: BTreeMap<String, SynthesisReport>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&dir.join(MANIFEST_NAME), text)
    }

    pub fn has_stage(&self, stage: &str) -> bool {
        self.stages.contains_key(stage)
    }

    fn all_artifacts(&self) -> impl Iterator<Item = &ArtifactRef> {
        self.checkpoints
            .values()
            .chain(self.reports.values())
            .chain(self.other_artifacts.values())
    }

    /// Every referenced artifact exists under `dir` and matches its checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in self.all_artifacts() {
            let path = dir.join(&a.path);
            if !path.exists() {
                return Err(Error::Integrity(format!("artifact `{}` is missing", a.path)));
            }
            if sha256_file(&path)? != a.sha256 {
                return Err(Error::Integrity(format!("artifact `{}` fails its checksum", a.path)));
            }
        }
        Ok(())
    }
}

/// Writes `contents` to `dir/rel` and returns its reference.
pub fn store(dir: &Path, rel: &str, contents: impl AsRef<[u8]>) -> Result<ArtifactRef> {
    let bytes = contents.as_ref();
    write_file(&dir.join(rel), bytes)?;
    Ok(ArtifactRef {
        path: rel.to_string(),
        sha256: crate::io::sha256_hex(bytes),
    })
}

/// Reads an artifact and checks it against its recorded checksum.
pub fn fetch(dir: &Path, artifact: &ArtifactRef) -> Result<Vec<u8>> {
    let path = dir.join(&artifact.path);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if crate::io::sha256_hex(&bytes) != artifact.sha256 {
        return Err(Error::Integrity(format!(
            "artifact `{}` fails its checksum",
            artifact.path
        )));
    }
    Ok(bytes)
}
