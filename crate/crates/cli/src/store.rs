//! Output directory: atomic artifact writes and the job manifest that makes
//! reruns resumable.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub status: JobStatus,
    /// Path relative to the output directory.
    pub artifact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub jobs: BTreeMap<String, JobRecord>,
}

pub struct Store {
    root: PathBuf,
    hash: String,
    manifest: Mutex<Manifest>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Store {
    /// Opens (or creates) an output directory for the config with `hash`.
    /// A directory holding another config's manifest is refused.
    pub fn open(root: &Path, hash: &str, seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            if m.config_hash != hash {
                return Err(CliError::Config(format!(
                    "{} holds results of config {} but this config hashes to {hash}; use a fresh output directory",
                    root.display(),
                    m.config_hash
                )));
            }
            m
        } else {
            Manifest {
                config_hash: hash.to_string(),
                seed,
                jobs: BTreeMap::new(),
            }
        };
        Ok(Self {
            root: root.to_path_buf(),
            hash: hash.to_string(),
            manifest: Mutex::new(manifest),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes through a temporary file in the target directory and renames
    /// it into place.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        let dir = path.parent().unwrap_or(&self.root);
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        tmp.write_all(bytes).map_err(|e| io_err(&path, e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(&self.path(rel), e))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, CliError> {
        let path = self.path(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    /// A job counts as done only if the manifest says so and its artifact is
    /// still on disk.
    pub fn is_done(&self, id: &str) -> bool {
        let m = self.manifest.lock().expect("manifest lock");
        m.jobs
            .get(id)
            .is_some_and(|r| r.status == JobStatus::Done && self.root.join(&r.artifact).exists())
    }

    pub fn record(&self, id: &str, record: JobRecord) -> Result<(), CliError> {
        let mut m = self.manifest.lock().expect("manifest lock");
        m.jobs.insert(id.to_string(), record);
        self.write_json(MANIFEST, &*m)
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        let m = self.manifest.lock().expect("manifest lock");
        m.jobs
            .iter()
            .filter(|(_, r)| r.status == JobStatus::Failed)
            .map(|(id, r)| (id.clone(), r.error.clone().unwrap_or_default()))
            .collect()
    }

    /// Persists the manifest even if no job ran.
    pub fn flush(&self) -> Result<(), CliError> {
        let m = self.manifest.lock().expect("manifest lock");
        self.write_json(MANIFEST, &*m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn done_requires_artifact_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), "abc", 0).unwrap();
        store.write("jobs/a.json", b"{}").unwrap();
        store
            .record(
                "a",
                JobRecord {
                    status: JobStatus::Done,
                    artifact: "jobs/a.json".into(),
                    error: None,
                },
            )
            .unwrap();
        assert!(store.is_done("a"));
        std::fs::remove_file(dir.path().join("jobs/a.json")).unwrap();
        assert!(!store.is_done("a"));
    }

    #[test]
    fn foreign_manifest_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        Store::open(dir.path(), "abc", 0).unwrap().flush().unwrap();
        assert!(Store::open(dir.path(), "abc", 0).is_ok());
        assert!(matches!(Store::open(dir.path(), "xyz", 0), Err(CliError::Config(_))));
    }

    #[test]
    fn failures_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), "abc", 0).unwrap();
        store
            .record(
                "b",
                JobRecord {
                    status: JobStatus::Failed,
                    artifact: "jobs/b.json".into(),
                    error: Some("diverged".into()),
                },
            )
            .unwrap();
        assert_eq!(store.failures(), vec![("b".to_string(), "diverged".to_string())]);
        let reread = Store::open(dir.path(), "abc", 0).unwrap();
        assert_eq!(reread.failures().len(), 1);
    }
}
