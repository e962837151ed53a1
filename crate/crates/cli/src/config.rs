use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

pub const ENDPOINT_ENV: &str = "OVERPASS_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://overpass-api.de";
pub const DEFAULT_NOMINATIM: &str = "https://nominatim.openstreetmap.org";

/// Values read from `--config`. Flags win over these, and these win over
/// environment variables.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub nominatim: Option<String>,
    pub bbox: Option<String>,
    pub geocodes: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub max_inflight: Option<usize>,
    pub timeout: Option<f64>,
    pub provider: Option<String>,
    pub embedding_dimension: Option<usize>,
    pub client: Option<String>,
    pub model: Option<String>,
    pub strategy: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn endpoint(&self, flag: Option<&str>) -> String {
        flag.map(str::to_string)
            .or_else(|| self.endpoint.clone())
            .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty()))
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string())
    }
}

pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

pub fn require<T: Clone>(flag: Option<T>, file: &Option<T>, name: &str) -> Result<T> {
    match pick(flag, file) {
        Some(v) => Ok(v),
        None => bail!("--{name} is required (flag or config file)"),
    }
}
