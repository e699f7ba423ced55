//! Append-only progress files for operations that call external services.
//!
//! Each line is `{"id": <sentence or chunk id>, "value": <json>}`. When a
//! service fails mid-run the caller returns an error carrying the checkpoint
//! path, and a rerun pointed at the same file skips every recorded id.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Record<T> {
    id: u64,
    value: T,
}

#[derive(Debug)]
pub struct Checkpoint<T> {
    path: Option<PathBuf>,
    file: Option<File>,
    done: HashMap<u64, T>,
}

impl<T: Serialize + DeserializeOwned + Clone> Checkpoint<T> {
    /// In-memory only; nothing survives a failure.
    pub fn ephemeral() -> Self {
        Self {
            path: None,
            file: None,
            done: HashMap::new(),
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut done = HashMap::new();
        let mut needs_newline = false;
        if path.exists() {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            needs_newline = !raw.is_empty() && !raw.ends_with('\n');
            for (lineno, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                // Torn lines from an interrupted write are skipped; the id is
                // simply redone.
                match serde_json::from_str::<Record<T>>(line) {
                    Ok(r) => {
                        done.insert(r.id, r.value);
                    }
                    Err(e) => log::warn!("{}:{}: skipping record: {e}", path.display(), lineno + 1),
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if needs_newline {
            writeln!(file).map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            path: Some(path.to_owned()),
            file: Some(file),
            done,
        })
    }

    pub fn open_or_ephemeral(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::open(p),
            None => Ok(Self::ephemeral()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, id: u64) -> Option<&T> {
        self.done.get(&id)
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    pub fn record(&mut self, id: u64, value: T) -> Result<()> {
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let line = serde_json::to_string(&Record { id, value: value.clone() })?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.done.insert(id, value);
        Ok(())
    }

    /// Wraps an external-service error with this checkpoint's location.
    pub fn abort(&self, err: Error) -> Error {
        err.with_checkpoint(self.path.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        {
            let mut ck = Checkpoint::<f64>::open(&path).unwrap();
            ck.record(3, 0.25).unwrap();
            ck.record(7, 1.0).unwrap();
        }
        let ck = Checkpoint::<f64>::open(&path).unwrap();
        assert_eq!(ck.len(), 2);
        assert_eq!(ck.get(3), Some(&0.25));
        assert_eq!(ck.get(4), None);
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        fs::write(&path, "{\"id\":1,\"value\":2.0}\n{\"id\":2,\"va").unwrap();
        let ck = Checkpoint::<f64>::open(&path).unwrap();
        assert_eq!(ck.len(), 1);
    }
}
