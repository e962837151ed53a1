//! Text generation backends.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::prompt::truncate_at_stop;
use super::HarnessError;

pub const TOKEN_ENV: &str = "GEN_CLIENT_TOKEN";

pub trait GenerationClient: Send + Sync {
    fn generate(&self, prompt: &str, stop: &[&str], max_tokens: usize) -> Result<String, HarnessError>;
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays completions from a map keyed by the sha256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct FixtureClient {
    completions: HashMap<String, String>,
}

#[derive(Deserialize)]
struct FixtureLine {
    #[serde(default)]
    prompt_hash: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
    completion: String,
}

impl FixtureClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, completion: impl Into<String>) {
        self.completions.insert(prompt_hash(prompt), completion.into());
    }

    /// JSONL lines with `completion` and either `prompt_hash` or `prompt`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut c = FixtureClient::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| HarnessError::Config(format!("completions line {}: {m}", i + 1));
            let l: FixtureLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let key = match (l.prompt_hash, l.prompt) {
                (Some(h), _) => h,
                (None, Some(p)) => prompt_hash(&p),
                (None, None) => return Err(bad("needs prompt_hash or prompt".into())),
            };
            c.completions.insert(key, l.completion);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl GenerationClient for FixtureClient {
    fn generate(&self, prompt: &str, stop: &[&str], _max_tokens: usize) -> Result<String, HarnessError> {
        let hash = prompt_hash(prompt);
        self.completions
            .get(&hash)
            .map(|c| truncate_at_stop(c, stop))
            .ok_or(HarnessError::Generation(format!("no completion for prompt {hash}")))
    }
}

/// Client for an OpenAI-style `/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpClient {
    pub url: String,
    pub model: String,
    pub token: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
}

impl HttpClient {
    /// Reads the bearer token from `GEN_CLIENT_TOKEN` when set.
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpClient {
            url: url.into(),
            model: model.into(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
        }
    }
}

impl GenerationClient for HttpClient {
    fn generate(&self, prompt: &str, stop: &[&str], max_tokens: usize) -> Result<String, HarnessError> {
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": self.temperature,
            "stop": stop,
        });
        let mut req = ureq::post(&self.url).timeout(self.timeout);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let reply: serde_json::Value = req
            .send_json(body)
            .map_err(|e| HarnessError::Generation(e.to_string()))?
            .into_json()
            .map_err(|e| HarnessError::Generation(e.to_string()))?;
        let choice = &reply["choices"][0];
        let text = choice["text"]
            .as_str()
            .or_else(|| choice["message"]["content"].as_str())
            .ok_or_else(|| HarnessError::Generation("response has no completion text".into()))?;
        Ok(truncate_at_stop(text, stop))
    }
}
