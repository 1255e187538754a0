//! Append-only JSON persistence: one `.jsonl` file per session and per job,
//! each line a full snapshot; the last line is current.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Store {
    root: Option<PathBuf>,
}

impl Store {
    /// Persists under `root/sessions` and `root/jobs`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("jobs"))?;
        Ok(Self { root: Some(root) })
    }

    /// Keeps nothing on disk.
    pub fn memory() -> Self {
        Self { root: None }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn file(&self, kind: &str, id: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(kind).join(format!("{id}.jsonl")))
    }

    pub fn session_path(&self, id: &str) -> Option<PathBuf> {
        self.file("sessions", id)
    }

    pub fn job_path(&self, id: &str) -> Option<PathBuf> {
        self.file("jobs", id)
    }

    /// Path of a job's side file such as `convergence.csv`.
    pub fn artifact_path(&self, job_id: &str, name: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("jobs").join(format!("{job_id}.{name}")))
    }

    /// Appends one snapshot line; returns the bytes written (without newline).
    pub fn append<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> Result<Vec<u8>> {
        let line = serde_json::to_vec(value)?;
        if let Some(path) = self.file(kind, id) {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut buf = line.clone();
            buf.push(b'\n');
            f.write_all(&buf)?;
        }
        Ok(line)
    }

    pub fn write_artifact(&self, job_id: &str, name: &str, contents: &str) -> Result<Option<PathBuf>> {
        let Some(path) = self.artifact_path(job_id, name) else { return Ok(None) };
        fs::write(&path, contents)?;
        Ok(Some(path))
    }

    /// Raw bytes of the latest snapshot.
    pub fn latest_raw(&self, kind: &str, id: &str) -> Result<Vec<u8>> {
        let path = self
            .file(kind, id)
            .ok_or_else(|| Error::NotFound(format!("{kind}/{id}: no data directory")))?;
        let data = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("{kind}/{id}")),
            _ => Error::Io(e),
        })?;
        data.split(|b| *b == b'\n')
            .rfind(|l| !l.is_empty())
            .map(<[u8]>::to_vec)
            .ok_or_else(|| Error::NotFound(format!("{kind}/{id} is empty")))
    }

    pub fn load<T: DeserializeOwned>(&self, kind: &str, id: &str) -> Result<T> {
        Ok(serde_json::from_slice(&self.latest_raw(kind, id)?)?)
    }

    /// Every snapshot, oldest first.
    pub fn history<T: DeserializeOwned>(&self, kind: &str, id: &str) -> Result<Vec<T>> {
        let Some(path) = self.file(kind, id) else { return Ok(Vec::new()) };
        let data = fs::read_to_string(path)?;
        data.lines()
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }

    /// Ids with at least one snapshot.
    pub fn ids(&self, kind: &str) -> Result<Vec<String>> {
        let Some(root) = &self.root else { return Ok(Vec::new()) };
        let mut out: Vec<String> = fs::read_dir(root.join(kind))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}
