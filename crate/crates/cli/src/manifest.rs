//! Run manifest: config snapshot, artifact digests and unit completion.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub artifacts: Vec<String>,
    /// Digest of the inputs a unit was computed from, for units whose
    /// inputs can change between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: Value,
    pub artifacts: BTreeMap<String, String>,
    pub units: BTreeMap<String, UnitRecord>,
}

impl Manifest {
    pub fn new(config: Value) -> Self {
        Self { version: MANIFEST_VERSION, config, artifacts: BTreeMap::new(), units: BTreeMap::new() }
    }

    /// Loads the manifest in `root`, or starts a fresh one. An existing
    /// manifest recorded under a different experiment is a conflict.
    pub fn open(root: &Path, identity: Value) -> Result<Self, CliError> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(identity));
        }
        let text = fs::read_to_string(&path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::ArtifactCorrupt(format!("{}: {e}", path.display())))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(CliError::ResumeConflict(format!("manifest version {}", manifest.version)));
        }
        if manifest.config != identity {
            return Err(CliError::ResumeConflict(format!(
                "{} was written for a different configuration",
                path.display()
            )));
        }
        Ok(manifest)
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, root: &Path) -> Result<(), CliError> {
        let path = root.join(MANIFEST_FILE);
        let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(serde_json::to_string_pretty(self).expect("serializable").as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn is_complete(&self, unit: &str) -> bool {
        self.units.contains_key(unit)
    }

    /// Records a finished unit; its artifact digests go in first.
    pub fn complete(&mut self, unit: &str, artifacts: Vec<(String, String)>, inputs: Option<String>) {
        let names = artifacts.iter().map(|(p, _)| p.clone()).collect();
        for (path, digest) in artifacts {
            self.artifacts.insert(path, digest);
        }
        self.units.insert(unit.to_string(), UnitRecord { artifacts: names, inputs });
    }

    /// Reads an artifact and checks it against its recorded digest.
    pub fn read_verified(&self, root: &Path, rel: &str) -> Result<Vec<u8>, CliError> {
        let expected = self
            .artifacts
            .get(rel)
            .ok_or_else(|| CliError::ArtifactCorrupt(format!("{rel} is not recorded in the manifest")))?;
        let bytes = fs::read(root.join(rel)).map_err(|e| CliError::ArtifactCorrupt(format!("{rel}: {e}")))?;
        if &sha256_hex(&bytes) != expected {
            return Err(CliError::ArtifactCorrupt(format!("{rel}: digest mismatch")));
        }
        Ok(bytes)
    }

    /// Checks every artifact of a completed unit.
    pub fn verify_unit(&self, root: &Path, unit: &str) -> Result<(), CliError> {
        if let Some(record) = self.units.get(unit) {
            for rel in &record.artifacts {
                self.read_verified(root, rel)?;
            }
        }
        Ok(())
    }

    pub fn verify_all(&self, root: &Path) -> Result<(), CliError> {
        for rel in self.artifacts.keys() {
            self.read_verified(root, rel)?;
        }
        Ok(())
    }
}

/// Writes `bytes` to `root/rel` (creating parents) and returns its digest.
pub fn write_artifact(root: &Path, rel: &str, bytes: &[u8]) -> Result<(String, String), CliError> {
    let path: PathBuf = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok((rel.to_string(), sha256_hex(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new(json!({"n": 3}));
        let art = write_artifact(dir.path(), "a/b.txt", b"hello").unwrap();
        m.complete("unit", vec![art], None);
        m.save(dir.path()).unwrap();
        let loaded = Manifest::open(dir.path(), json!({"n": 3})).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.read_verified(dir.path(), "a/b.txt").unwrap(), b"hello");
        fs::write(dir.path().join("a/b.txt"), b"jello").unwrap();
        assert!(matches!(loaded.verify_unit(dir.path(), "unit"), Err(CliError::ArtifactCorrupt(_))));
        assert!(matches!(Manifest::open(dir.path(), json!({"n": 4})), Err(CliError::ResumeConflict(_))));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
