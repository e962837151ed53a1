#![allow(dead_code)]

pub mod gen;

use std::collections::BTreeMap;
use std::path::PathBuf;

use oqlkit::corpus::{load_predictions, Corpus, Instance, Split};
use oqlkit::executor::fixture::{CannedMap, FixtureServer};
use oqlkit::executor::{ExecutionConfig, Executor, FixtureResolver};
use oqlkit::harness::{GenerationClient, HarnessError};

pub const BBOX: [f64; 4] = [49.0, 8.0, 49.5, 8.5];

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn resolver() -> FixtureResolver {
    FixtureResolver::load(&data("geocodes.tsv")).unwrap()
}

pub fn corpus(name: &str) -> Corpus {
    Corpus::load(&data(name)).unwrap()
}

pub fn predictions(name: &str) -> BTreeMap<String, String> {
    load_predictions(&data(name)).unwrap()
}

/// Fixture server loaded with the canned responses, keys expanded.
pub fn server() -> FixtureServer {
    let canned = CannedMap::load(&data("fixture_responses.jsonl")).unwrap();
    let canned = canned.expand_keys(BBOX, &resolver()).unwrap();
    FixtureServer::start(canned).unwrap()
}

pub fn executor(server: &FixtureServer) -> Executor {
    let mut cfg = ExecutionConfig::new(server.url());
    cfg.default_bbox = BBOX;
    cfg.request_timeout = 10.0;
    Executor::new(cfg, Box::new(resolver())).unwrap()
}

/// Returns the fixed query for an input, but only once the prompt carries
/// the parser error as feedback.
pub struct ScriptedClient {
    fixes: BTreeMap<String, String>,
}

impl GenerationClient for ScriptedClient {
    fn generate(&self, prompt: &str, _stop: &[&str], _max: usize) -> Result<String, HarnessError> {
        let nl = prompt.split("Here is an Input:\n").nth(1).and_then(|r| r.split("\n\n").next()).unwrap_or("");
        match self.fixes.get(nl) {
            Some(q) if prompt.contains("parse error: Unknown type \"->\"") => Ok(format!("```\n{q}\n```")),
            _ => Err(HarnessError::Generation(format!("no scripted fix for {nl:?}"))),
        }
    }
}

pub fn scripted_client() -> ScriptedClient {
    let text = std::fs::read_to_string(data("refine_fixes.jsonl")).unwrap();
    let fixes = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["nl"].as_str().unwrap().to_string(), v["query"].as_str().unwrap().to_string())
        })
        .collect();
    ScriptedClient { fixes }
}


/// Deterministic synthetic corpus with `train` and `test` instances.
pub fn synthetic_corpus(train: usize, test: usize) -> Corpus {
    use proptest::strategy::{Strategy, ValueTree};
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let queries = gen::query_text();
    let inputs = "[a-z]{2,8}( [a-z]{2,8}){1,6}";
    let mut out = Vec::with_capacity(train + test);
    for i in 0..train + test {
        let (split, id) = if i < train { (Split::Train, format!("train-{i:05}")) } else { (Split::Test, format!("test-{i:05}")) };
        let q = queries.new_tree(&mut runner).unwrap().current();
        let nl = inputs.new_tree(&mut runner).unwrap().current();
        out.push(Instance::new(id, nl, q, split));
    }
    Corpus::new(out).unwrap()
}
