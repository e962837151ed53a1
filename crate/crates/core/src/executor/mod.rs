//! Grounded execution of queries against an Overpass API endpoint.

mod cache;
pub mod fixture;
pub mod geocode;
pub mod macros;
pub mod payload;

use std::fmt;
use std::io::Read as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geocode::{FixtureResolver, GeocodeHit, GeocodeResolver, NominatimResolver};
pub use macros::expand_macros;
pub use payload::{extract_elements, parse_payload, python_repr, PayloadFormat};

use crate::metrics::ElementSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("invalid execution config: {0}")]
    Config(String),
    #[error("geocoding found no match for \"{0}\"")]
    GeocodeNotFound(String),
    #[error("unsupported turbo macro {0}")]
    UnknownMacro(String),
    #[error("geocoder failure: {0}")]
    Geocoder(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_secs: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    pub endpoint_url: String,
    pub request_timeout: f64,
    /// south, west, north, east
    pub default_bbox: [f64; 4],
    pub max_inflight: usize,
    pub retry: RetryPolicy,
    pub cache_dir: Option<PathBuf>,
}

impl ExecutionConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        ExecutionConfig {
            endpoint_url: endpoint_url.into(),
            request_timeout: 300.0,
            default_bbox: [49.0, 8.0, 49.5, 8.5],
            max_inflight: 4,
            retry: RetryPolicy::default(),
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let [s, w, n, e] = self.default_bbox;
        if !(s < n) {
            return Err(ExecError::Config(format!("bbox south {s} must be below north {n}")));
        }
        if !(-90.0..=90.0).contains(&s) || !(-90.0..=90.0).contains(&n) {
            return Err(ExecError::Config("bbox latitudes must lie in [-90, 90]".into()));
        }
        if !(-180.0..=180.0).contains(&w) || !(-180.0..=180.0).contains(&e) {
            return Err(ExecError::Config("bbox longitudes must lie in [-180, 180]".into()));
        }
        if self.max_inflight == 0 {
            return Err(ExecError::Config("max_inflight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ExecError::Config("retry attempts must be at least 1".into()));
        }
        if !(self.request_timeout > 0.0) {
            return Err(ExecError::Config("request timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Parses `south,west,north,east`.
pub fn parse_bbox(text: &str) -> Result<[f64; 4], ExecError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ExecError::Config(format!("bbox \"{text}\" is not four numbers")))?;
    parts
        .try_into()
        .map_err(|_| ExecError::Config(format!("bbox \"{text}\" is not four numbers")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    SyntaxError,
    RuntimeError,
    Timeout,
    TransportError,
}

impl ExecutionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::SyntaxError => "syntax_error",
            Self::RuntimeError => "runtime_error",
            Self::Timeout => "timeout",
            Self::TransportError => "transport_error",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ok" => Self::Ok,
            "syntax_error" => Self::SyntaxError,
            "runtime_error" => Self::RuntimeError,
            "timeout" => Self::Timeout,
            "transport_error" => Self::TransportError,
            _ => return None,
        })
    }
}

impl fmt::Display for ExecutionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of element lines kept for feedback.
pub const SAMPLE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    /// Present exactly when `status` is ok.
    pub elements: Option<ElementSet>,
    pub error_message: Option<String>,
    pub elapsed: f64,
    pub returned_count: usize,
    /// First returned elements in payload order, one rendered line each.
    pub sample: Vec<String>,
    pub warnings: Vec<String>,
}

impl ExecutionOutcome {
    pub fn failure(status: ExecutionStatus, message: impl Into<String>, elapsed: f64) -> Self {
        ExecutionOutcome {
            status,
            elements: None,
            error_message: Some(message.into()),
            elapsed,
            returned_count: 0,
            sample: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecutionStatus::Ok
    }
}

pub const NO_RESULTS: &str = "No Results found.";

/// Text shown to a model about how its query ran: the error message, a fixed
/// line for empty results, or the first `sample_size` returned elements.
pub fn feedback_from_outcome(outcome: &ExecutionOutcome, sample_size: usize) -> String {
    if !outcome.is_ok() {
        return outcome.error_message.clone().unwrap_or_default();
    }
    if outcome.returned_count == 0 || outcome.sample.is_empty() {
        return NO_RESULTS.to_string();
    }
    outcome.sample.iter().take(sample_size.max(1)).cloned().collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

/// Sends one POST request. `Err` means no HTTP response was received.
pub trait Transport: Send + Sync {
    fn post_form(&self, url: &str, form: &[(&str, &str)], timeout: Duration) -> Result<HttpResponse, String>;
}

#[derive(Debug, Clone, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_form(&self, url: &str, form: &[(&str, &str)], timeout: Duration) -> Result<HttpResponse, String> {
        let result = ureq::post(url).timeout(timeout).send_form(form);
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(e.to_string()),
        };
        let status = response.status();
        let content_type = response.header("content-type").map(str::to_string);
        let mut body = Vec::new();
        response
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, content_type, body })
    }
}


/// Counting semaphore bounding concurrent requests.
struct Gate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

struct GatePass<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate { limit, active: Mutex::new(0), freed: Condvar::new(), peak: AtomicUsize::new(0) }
    }

    fn enter(&self) -> GatePass<'_> {
        let mut active = self.active.lock().expect("gate lock");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("gate lock");
        }
        *active += 1;
        self.peak.fetch_max(*active, Ordering::SeqCst);
        GatePass(self)
    }
}

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().expect("gate lock");
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared executor: owns the in-flight bound, the cache and the transport.
pub struct Executor {
    cfg: ExecutionConfig,
    resolver: Box<dyn GeocodeResolver>,
    transport: Box<dyn Transport>,
    gate: Gate,
    requests: AtomicUsize,
    cache: Option<cache::OutcomeCache>,
}

impl Executor {
    pub fn new(cfg: ExecutionConfig, resolver: Box<dyn GeocodeResolver>) -> Result<Self, ExecError> {
        Self::with_transport(cfg, resolver, Box::new(UreqTransport))
    }

    pub fn with_transport(
        cfg: ExecutionConfig,
        resolver: Box<dyn GeocodeResolver>,
        transport: Box<dyn Transport>,
    ) -> Result<Self, ExecError> {
        cfg.validate()?;
        let cache = match &cfg.cache_dir {
            Some(dir) => Some(cache::OutcomeCache::open(dir).map_err(|e| ExecError::Config(e.to_string()))?),
            None => None,
        };
        Ok(Executor {
            gate: Gate::new(cfg.max_inflight),
            cfg,
            resolver,
            transport,
            requests: AtomicUsize::new(0),
            cache,
        })
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.cfg
    }

    /// Highest number of simultaneous requests seen so far.
    pub fn peak_inflight(&self) -> usize {
        self.gate.peak.load(Ordering::SeqCst)
    }

    /// HTTP requests sent so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn expand(&self, text: &str) -> Result<String, ExecError> {
        expand_macros(text, self.cfg.default_bbox, self.resolver.as_ref())
    }

    pub fn execute(&self, text: &str) -> ExecutionOutcome {
        let started = Instant::now();
        let expanded = match self.expand(text) {
            Ok(e) => e,
            Err(e) => {
                return ExecutionOutcome::failure(
                    ExecutionStatus::RuntimeError,
                    format!("Error: {e}"),
                    started.elapsed().as_secs_f64(),
                )
            }
        };
        let key = cache::cache_key(&self.cfg.endpoint_url, &expanded);
        if let Some(c) = &self.cache {
            if let Some(hit) = c.get(&key) {
                return hit;
            }
        }
        let mut outcome = self.run(&expanded);
        outcome.elapsed = started.elapsed().as_secs_f64();
        if let Some(c) = &self.cache {
            if matches!(
                outcome.status,
                ExecutionStatus::Ok | ExecutionStatus::SyntaxError | ExecutionStatus::RuntimeError
            ) {
                // A cache write failure only costs a later re-execution.
                let _ = c.put(&key, &outcome);
            }
        }
        outcome
    }

    fn run(&self, expanded: &str) -> ExecutionOutcome {
        let url = format!("{}/api/interpreter", self.cfg.endpoint_url.trim_end_matches('/'));
        let timeout = Duration::from_secs_f64(self.cfg.request_timeout);
        let mut last = None;
        for attempt in 0..self.cfg.retry.max_attempts {
            if attempt > 0 {
                let wait = self.cfg.retry.backoff_secs * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(wait.max(0.0)));
            }
            let response = {
                let _pass = self.gate.enter();
                self.requests.fetch_add(1, Ordering::SeqCst);
                self.transport.post_form(&url, &[("data", expanded)], timeout)
            };
            match response {
                Err(msg) => last = Some(ExecutionOutcome::failure(ExecutionStatus::TransportError, msg, 0.0)),
                Ok(r) if r.status == 429 || r.status == 503 => {
                    last = Some(ExecutionOutcome::failure(
                        ExecutionStatus::TransportError,
                        format!("HTTP {}: {}", r.status, html_text(&r.body)),
                        0.0,
                    ))
                }
                Ok(r) => return classify(expanded, r),
            }
        }
        last.expect("at least one attempt")
    }
}

/// Executes one query with a fresh executor.
pub fn execute(text: &str, cfg: &ExecutionConfig, resolver: Box<dyn GeocodeResolver>) -> ExecutionOutcome {
    match Executor::new(cfg.clone(), resolver) {
        Ok(ex) => ex.execute(text),
        Err(e) => ExecutionOutcome::failure(ExecutionStatus::TransportError, e.to_string(), 0.0),
    }
}

/// Plain text of an Overpass HTML error page: the `Error:` lines when there
/// are any, otherwise all text.
pub fn html_text(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    let mut plain = String::with_capacity(text.len());
    let mut in_tag = false;
    for ch in text.chars() {
        match ch {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            c if !in_tag => plain.push(c),
            _ => {}
        }
    }
    let plain = plain.replace("&quot;", "\"").replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&");
    let errors: Vec<&str> = plain.lines().map(str::trim).filter(|l| l.starts_with("Error:")).collect();
    if errors.is_empty() {
        plain.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        errors.join("\n")
    }
}

fn payload_format(expanded: &str, content_type: Option<&str>) -> PayloadFormat {
    let setting = crate::parser::parse(expanded).ok().and_then(|a| a.setting("out").map(str::to_string));
    let from_query = PayloadFormat::from_setting(setting.as_deref());
    if matches!(from_query, PayloadFormat::Csv { .. }) {
        return from_query;
    }
    content_type.and_then(PayloadFormat::from_content_type).unwrap_or(from_query)
}

fn classify(expanded: &str, r: HttpResponse) -> ExecutionOutcome {
    match r.status {
        200 => {}
        400 => return ExecutionOutcome::failure(ExecutionStatus::SyntaxError, html_text(&r.body), 0.0),
        504 => return ExecutionOutcome::failure(ExecutionStatus::Timeout, html_text(&r.body), 0.0),
        s => {
            return ExecutionOutcome::failure(
                ExecutionStatus::RuntimeError,
                format!("HTTP {s}: {}", html_text(&r.body)),
                0.0,
            )
        }
    }
    let format = payload_format(expanded, r.content_type.as_deref());
    let extracted = match parse_payload(&r.body, &format) {
        Ok(x) => x,
        Err(e) => return ExecutionOutcome::failure(ExecutionStatus::RuntimeError, e.to_string(), 0.0),
    };
    if let Some(remark) = extracted.remark {
        let status = if remark.contains("timed out") {
            ExecutionStatus::Timeout
        } else {
            ExecutionStatus::RuntimeError
        };
        return ExecutionOutcome::failure(status, remark, 0.0);
    }
    ExecutionOutcome {
        status: ExecutionStatus::Ok,
        sample: extracted.records.iter().take(SAMPLE_LIMIT).map(python_repr).collect(),
        elements: Some(extracted.elements),
        error_message: None,
        elapsed: 0.0,
        returned_count: extracted.returned_count,
        warnings: extracted.warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ExecutionConfig::new("http://localhost");
        assert!(c.validate().is_ok());
        c.default_bbox = [50.0, 8.0, 49.0, 9.0];
        assert!(c.validate().is_err());
        c.default_bbox = [49.0, 8.0, 50.0, 190.0];
        assert!(c.validate().is_err());
        c.default_bbox = [49.0, 8.0, 50.0, 9.0];
        c.max_inflight = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn bbox_parsing() {
        assert_eq!(parse_bbox("49.0, 8, 49.5,8.5").unwrap(), [49.0, 8.0, 49.5, 8.5]);
        assert!(parse_bbox("1,2,3").is_err());
    }

    #[test]
    fn html_error_text() {
        let body = br#"<?xml version="1.0" encoding="UTF-8"?>
<html><body>
<p><strong style="color:#FF0000">Error</strong>: line 1: parse error: Unknown type &quot;-&gt;&quot; </p>
</body></html>"#;
        assert_eq!(html_text(body), "Error: line 1: parse error: Unknown type \"->\"");
    }

    #[test]
    fn feedback_kinds() {
        let err = ExecutionOutcome::failure(ExecutionStatus::SyntaxError, "Error: line 1: parse error: Unknown type \"->\"", 0.0);
        assert_eq!(feedback_from_outcome(&err, 1), "Error: line 1: parse error: Unknown type \"->\"");
        let empty = ExecutionOutcome {
            status: ExecutionStatus::Ok,
            elements: Some(ElementSet::new()),
            error_message: None,
            elapsed: 0.0,
            returned_count: 0,
            sample: vec![],
            warnings: vec![],
        };
        assert_eq!(feedback_from_outcome(&empty, 1), NO_RESULTS);
        let full = ExecutionOutcome { returned_count: 2, sample: vec!["a".into(), "b".into()], ..empty };
        assert_eq!(feedback_from_outcome(&full, 1), "a");
        assert_eq!(feedback_from_outcome(&full, 5), "a\nb");
    }
}
