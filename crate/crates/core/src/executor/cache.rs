//! On-disk outcome cache, one JSON file per key.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ExecutionOutcome;

pub(crate) fn cache_key(endpoint: &str, expanded: &str) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.as_bytes());
    h.update([0u8]);
    h.update(expanded.as_bytes());
    hex::encode(h.finalize())
}

pub(crate) struct OutcomeCache {
    dir: PathBuf,
}

impl OutcomeCache {
    pub(crate) fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutcomeCache { dir: dir.to_path_buf() })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub(crate) fn get(&self, key: &str) -> Option<ExecutionOutcome> {
        let bytes = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub(crate) fn put(&self, key: &str, outcome: &ExecutionOutcome) -> io::Result<()> {
        let body = serde_json::to_vec(outcome).map_err(io::Error::other)?;
        let mut tmp = tempfile_in(&self.dir, key)?;
        tmp.1.write_all(&body)?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, self.path(key))
    }
}

fn tempfile_in(dir: &Path, key: &str) -> io::Result<(PathBuf, fs::File)> {
    let path = dir.join(format!(".{key}.{}.tmp", std::process::id()));
    let file = fs::File::create(&path)?;
    Ok((path, file))
}
