//! Run directories and their manifests.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const RUNS_DIR_ENV: &str = "PME_LAB_RUNS_DIR";
pub const MANIFEST: &str = "manifest.json";

const DETERMINISM: &str =
    "no random numbers are drawn; identical config and version give identical numeric outputs";

/// Root for new run directories: `$PME_LAB_RUNS_DIR`, else `./runs`.
pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// Everything needed to rerun: the parsed config or the flag values.
    pub config: serde_json::Value,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
    pub determinism: String,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?)
    }

    /// Re-hashes every listed file. Returns the paths that are missing or
    /// whose content changed.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| match fs::read(dir.join(&f.path)) {
                Ok(bytes) => digest(&bytes) != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn digest_of(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.sha256.as_str())
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An output directory being filled. Files written through it are hashed
/// into the manifest on [`RunDir::finish`].
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    subcommand: String,
    started: DateTime<Utc>,
    files: Vec<FileEntry>,
    warnings: Vec<String>,
}

impl RunDir {
    /// Creates `<root>/<timestamp>-<subcommand>`, adding `-2`, `-3`, ... if
    /// that name is taken.
    pub fn create(root: &Path, subcommand: &str) -> Result<RunDir> {
        fs::create_dir_all(root)?;
        let started = Utc::now();
        let stem = format!("{}-{subcommand}", started.format("%Y%m%dT%H%M%S%.3fZ"));
        let mut path = root.join(&stem);
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    k += 1;
                    path = root.join(format!("{stem}-{k}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(RunDir {
            path,
            subcommand: subcommand.to_string(),
            started,
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// A fresh directory with a fixed name, used for sweep cells.
    pub fn create_named(path: PathBuf, subcommand: &str) -> Result<RunDir> {
        fs::create_dir_all(&path)?;
        Ok(RunDir {
            path,
            subcommand: subcommand.to_string(),
            started: Utc::now(),
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let target = self.path.join(rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, contents)?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: digest(contents),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Records a file produced elsewhere (for example inside a cell).
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.path.join(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: digest(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn finish(self, config: serde_json::Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            started: self.started,
            finished: Utc::now(),
            files: self.files,
            warnings: self.warnings,
            determinism: DETERMINISM.to_string(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.path.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_and_collisions() {
        let root = tempfile::tempdir().unwrap();
        let mut a = RunDir::create(root.path(), "solve").unwrap();
        let b = RunDir::create(root.path(), "solve").unwrap();
        assert_ne!(a.path(), b.path());
        a.write("trace.csv", b"t,r\n0,1\n").unwrap();
        a.write_json("report.json", &serde_json::json!({"x": 1.5}))
            .unwrap();
        let dir = a.path().to_path_buf();
        let manifest = a.finish(serde_json::json!({})).unwrap();
        assert_eq!(manifest.files.len(), 2);
        assert!(manifest.verify(&dir).is_empty());
        assert_eq!(RunManifest::read(&dir).unwrap(), manifest);
        // sha256 of the empty string is a fixed, well-known value
        assert_eq!(
            digest(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        fs::write(dir.join("trace.csv"), "tampered").unwrap();
        assert_eq!(manifest.verify(&dir), vec!["trace.csv".to_string()]);
    }
}
