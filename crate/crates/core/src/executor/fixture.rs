//! A local stand-in for an Overpass API endpoint serving canned responses.
//!
//! Requests whose query matches a canned entry get that entry's response.
//! Any other query is checked with the local parser: a parse error yields an
//! HTTP 400 page shaped like Overpass error output, anything else an empty
//! result in the requested format.

use std::collections::HashMap;
use std::io::{self, BufRead};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::geocode::GeocodeResolver;
use super::payload::PayloadFormat;
use super::{expand_macros, ExecError};
use crate::parser::parse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedResponse {
    pub status: u16,
    pub content_type: String,
    pub body: String,
}

impl CannedResponse {
    pub fn json(body: impl Into<String>) -> Self {
        CannedResponse { status: 200, content_type: "application/json".into(), body: body.into() }
    }
}

#[derive(Deserialize)]
struct CannedLine {
    query: String,
    #[serde(default = "ok_status")]
    status: u16,
    content_type: Option<String>,
    body: Value,
}

fn ok_status() -> u16 {
    200
}

/// Canned responses keyed by the canonical form of their query.
#[derive(Debug, Clone, Default)]
pub struct CannedMap {
    entries: HashMap<String, CannedResponse>,
}

/// Parsed queries compare by their canonical serialization; unparsable text by its trimmed form.
pub fn canonical_key(query: &str) -> String {
    match parse(query) {
        Ok(ast) => ast.to_query_string(),
        Err(_) => query.trim().to_string(),
    }
}

impl CannedMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: &str, response: CannedResponse) {
        self.entries.insert(canonical_key(query), response);
    }

    pub fn get(&self, query: &str) -> Option<&CannedResponse> {
        self.entries.get(&canonical_key(query))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads JSONL lines `{"query", "status"?, "content_type"?, "body"}`;
    /// a non-string body is sent as JSON.
    pub fn from_jsonl(reader: impl BufRead) -> io::Result<Self> {
        let mut map = CannedMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CannedLine = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            let (body, default_type) = match entry.body {
                Value::String(s) => (s, "application/osm3s+xml"),
                other => (other.to_string(), "application/json"),
            };
            let content_type = entry.content_type.unwrap_or_else(|| default_type.to_string());
            map.insert(&entry.query, CannedResponse { status: entry.status, content_type, body });
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_jsonl(io::BufReader::new(file))
    }

    /// Rewrites keys written with turbo macros into their expanded form, so
    /// they match what an executor sends.
    pub fn expand_keys(&self, bbox: [f64; 4], resolver: &dyn GeocodeResolver) -> Result<Self, ExecError> {
        let mut out = CannedMap::new();
        for (key, response) in &self.entries {
            let expanded = expand_macros(key, bbox, resolver)?;
            out.insert(&expanded, response.clone());
        }
        Ok(out)
    }

    /// Response for a query that reached the server.
    pub fn respond(&self, query: &str) -> CannedResponse {
        if let Some(r) = self.get(query) {
            return r.clone();
        }
        match parse(query) {
            Err(e) => CannedResponse {
                status: 400,
                content_type: "text/html; charset=utf-8".into(),
                body: error_page(&format!("line {}: parse error: {}", e.line, e.message)),
            },
            Ok(ast) => empty_result(&PayloadFormat::from_setting(ast.setting("out"))),
        }
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn error_page(message: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!DOCTYPE html>\n<html><head><title>OSM3S Response</title></head>\n<body>\n<p><strong style=\"color:#FF0000\">Error</strong>: {} </p>\n</body>\n</html>\n",
        html_escape(message)
    )
}

fn empty_result(format: &PayloadFormat) -> CannedResponse {
    match format {
        PayloadFormat::Json => CannedResponse::json(
            "{\n  \"version\": 0.6,\n  \"generator\": \"oqlkit fixture\",\n  \"elements\": []\n}\n",
        ),
        PayloadFormat::Xml => CannedResponse {
            status: 200,
            content_type: "application/osm3s+xml".into(),
            body: "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"oqlkit fixture\">\n</osm>\n".into(),
        },
        PayloadFormat::Csv { .. } => {
            CannedResponse { status: 200, content_type: "text/csv".into(), body: String::new() }
        }
    }
}

/// A running fixture server; stops when dropped.
pub struct FixtureServer {
    url: String,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
}

impl FixtureServer {
    /// Serves on an ephemeral localhost port.
    pub fn start(canned: CannedMap) -> io::Result<Self> {
        Self::bind("127.0.0.1:0", canned)
    }

    pub fn bind(addr: &str, canned: CannedMap) -> io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(io::Error::other)?;
        let url = match server.server_addr() {
            tiny_http::ListenAddr::IP(a) => format!("http://{a}"),
            #[allow(unreachable_patterns)]
            _ => return Err(io::Error::other("fixture server needs an IP address")),
        };
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let handle = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    handle_request(request, &canned);
                }
            })
        };
        Ok(FixtureServer { url, server, handle: Some(handle), requests })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks until the server thread ends.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn query_from_form(body: &str) -> Option<String> {
    url::form_urlencoded::parse(body.as_bytes())
        .find(|(k, _)| k == "data")
        .map(|(_, v)| v.into_owned())
}

fn handle_request(mut request: tiny_http::Request, canned: &CannedMap) {
    let path = request.url().to_string();
    let (route, query_string) = path.split_once('?').unwrap_or((path.as_str(), ""));
    let response = if route.trim_end_matches('/') != "/api/interpreter" {
        CannedResponse { status: 404, content_type: "text/plain".into(), body: "not found".into() }
    } else {
        let mut body = String::new();
        let read = request.as_reader().read_to_string(&mut body);
        let query = query_from_form(&body).or_else(|| query_from_form(query_string));
        match (read, query) {
            (Ok(_), Some(q)) => canned.respond(&q),
            _ => CannedResponse {
                status: 400,
                content_type: "text/html; charset=utf-8".into(),
                body: error_page("no \"data\" parameter given"),
            },
        }
    };
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], response.content_type.as_bytes())
        .expect("valid header");
    let reply = tiny_http::Response::from_string(response.body)
        .with_status_code(response.status)
        .with_header(header);
    let _ = request.respond(reply);
}
