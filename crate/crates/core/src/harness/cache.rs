//! Content-addressed store of finished runs, keyed by scenario hash.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

const COMPLETE: &str = "complete";

#[derive(Debug, Clone)]
pub struct Cache {
    pub root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn entry(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// The entry directory if a complete run is stored under `key`.
    pub fn lookup(&self, key: &str) -> Option<PathBuf> {
        let dir = self.entry(key);
        dir.join(COMPLETE).is_file().then_some(dir)
    }

    /// Store files (name, contents) under `key`. Writes go to a scratch
    /// directory that is renamed into place, so readers never see a partial entry.
    pub fn store(&self, key: &str, files: &[(String, Vec<u8>)]) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let scratch = tempdir_in(&self.root, key)?;
        for (name, bytes) in files {
            fs::write(scratch.join(name), bytes)?;
        }
        fs::write(scratch.join(COMPLETE), b"")?;
        let dir = self.entry(key);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&scratch, &dir)?;
        Ok(dir)
    }

    pub fn read(&self, key: &str, name: &str) -> Result<Vec<u8>> {
        let dir = self.lookup(key).ok_or_else(|| Error::UnknownArtifact(format!("no cached run {key}")))?;
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::UnknownArtifact(name.to_string()));
        }
        Ok(fs::read(path)?)
    }

    /// Stored file names of an entry, sorted.
    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        let dir = self.lookup(key).ok_or_else(|| Error::UnknownArtifact(format!("no cached run {key}")))?;
        let mut names: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != COMPLETE)
            .collect();
        names.sort();
        Ok(names)
    }
}

fn tempdir_in(root: &Path, key: &str) -> Result<PathBuf> {
    for i in 0..1000u32 {
        let p = root.join(format!(".{key}.{}.{i}", std::process::id()));
        if fs::create_dir(&p).is_ok() {
            return Ok(p);
        }
    }
    Err(Error::Io(format!("could not create a scratch directory in {}", root.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
