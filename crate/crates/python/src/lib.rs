//! Python bindings for the oqlkit metrics, parser and corpus tools.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use oqlkit::analysis::{extract_kv, normalize_template};
use oqlkit::corpus::{load_predictions, Corpus, Instance, Split};
use oqlkit::difficulty::{partition as partition_eval, DifficultyCriterion, TrainContext};
use oqlkit::embedding::HashingEmbedder;
use oqlkit::harness::{build_prompt as render_prompt, run_eval};
use oqlkit::metrics::{self, ElementRef, ElementSet, OsmKind};
use oqlkit::parser::{parse as parse_query, ParseError};
use oqlkit::tree::{count_syntactic_units, to_syntax_tree};

fn parse_err(e: ParseError) -> PyErr {
    PyValueError::new_err(format!("line {}, column {}: {}", e.line, e.column, e.message))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Syntax tree of a query, one node per line.
#[pyfunction]
fn parse(query: &str) -> PyResult<String> {
    parse_query(query).map(|a| to_syntax_tree(&a).pretty()).map_err(parse_err)
}

#[pyfunction]
fn syntactic_units(query: &str) -> PyResult<usize> {
    parse_query(query).map(|a| count_syntactic_units(&a)).map_err(parse_err)
}

#[pyfunction]
fn template(query: &str) -> PyResult<String> {
    parse_query(query).map(|a| normalize_template(&a)).map_err(parse_err)
}

/// Keys, values and key-value pairs of a query.
#[pyfunction]
fn kv_set<'py>(py: Python<'py>, query: &str) -> PyResult<Bound<'py, PyDict>> {
    let kv = extract_kv(&parse_query(query).map_err(parse_err)?);
    let d = PyDict::new_bound(py);
    d.set_item("keys", kv.keys.into_iter().collect::<Vec<_>>())?;
    d.set_item("values", kv.values.into_iter().collect::<Vec<_>>())?;
    d.set_item("pairs", kv.pairs.into_iter().collect::<Vec<_>>())?;
    Ok(d)
}

#[pyfunction]
fn chrf(hypothesis: &str, reference: &str) -> f64 {
    metrics::chrf(hypothesis, reference).value()
}

#[pyfunction]
fn bleu(hypothesis: &str, reference: &str) -> f64 {
    metrics::bleu(hypothesis, reference).value()
}

#[pyfunction]
fn em(hypothesis: &str, reference: &str) -> bool {
    metrics::em(hypothesis, reference)
}

#[pyfunction]
fn kvs(hypothesis: &str, reference: &str) -> PyResult<f64> {
    let h = extract_kv(&parse_query(hypothesis).map_err(parse_err)?);
    let r = extract_kv(&parse_query(reference).map_err(parse_err)?);
    Ok(metrics::kvs(&h, &r).value())
}

#[pyfunction]
fn trees(hypothesis: &str, reference: &str) -> PyResult<f64> {
    let h = to_syntax_tree(&parse_query(hypothesis).map_err(parse_err)?);
    let r = to_syntax_tree(&parse_query(reference).map_err(parse_err)?);
    Ok(metrics::trees(&h, &r).value())
}

/// chrF, KVS, TreeS and their mean. The reference must parse.
#[pyfunction]
fn oqs<'py>(py: Python<'py>, hypothesis: &str, reference: &str) -> PyResult<Bound<'py, PyDict>> {
    let b = metrics::oqs(hypothesis, reference).map_err(parse_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("chrf", b.chrf.value())?;
    d.set_item("kvs", b.kvs.value())?;
    d.set_item("trees", b.trees.value())?;
    d.set_item("oqs", b.oqs.value())?;
    d.set_item("hyp_parsed", b.hyp_parsed)?;
    Ok(d)
}

fn element_set(items: Vec<String>) -> PyResult<ElementSet> {
    items
        .iter()
        .map(|s| {
            let (kind, id) = s.split_once('/').ok_or_else(|| value_err(format!("expected kind/id, got {s:?}")))?;
            let kind = OsmKind::from_name(kind).ok_or_else(|| value_err(format!("unknown element kind {kind:?}")))?;
            Ok(ElementRef::osm(kind, id.parse().map_err(value_err)?))
        })
        .collect()
}

/// Soft execution accuracy over element ids written as `node/1`.
#[pyfunction]
fn ex_soft(generated: Vec<String>, reference: Vec<String>) -> PyResult<f64> {
    Ok(metrics::ex_soft(&element_set(generated)?, &element_set(reference)?).value())
}

fn load_corpus(path: &str) -> PyResult<Corpus> {
    Corpus::load(Path::new(path)).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Dataset statistics of a JSONL corpus as a JSON string.
#[pyfunction]
fn stats(corpus_path: &str) -> PyResult<String> {
    let report = oqlkit::corpus::stats(&load_corpus(corpus_path)?);
    serde_json::to_string(&report).map_err(value_err)
}

/// Aggregate scores (without execution) of a predictions file on a split.
#[pyfunction]
#[pyo3(signature = (corpus_path, predictions_path, split = "test"))]
fn evaluate(corpus_path: &str, predictions_path: &str, split: &str) -> PyResult<String> {
    let corpus = load_corpus(corpus_path)?;
    let split = Split::from_name(split).ok_or_else(|| value_err(format!("unknown split {split:?}")))?;
    let eval: Vec<Instance> = corpus.split(split).into_iter().cloned().collect();
    let predictions: BTreeMap<String, String> =
        load_predictions(Path::new(predictions_path)).map_err(|e| PyIOError::new_err(e.to_string()))?;
    serde_json::to_string(&run_eval(&eval, &predictions, None).aggregates).map_err(value_err)
}

/// `(id, score, bucket)` for every instance of the split.
#[pyfunction]
#[pyo3(signature = (corpus_path, criterion, split = "test"))]
fn partition(corpus_path: &str, criterion: &str, split: &str) -> PyResult<Vec<(String, f64, String)>> {
    let criterion: DifficultyCriterion = criterion.parse().map_err(value_err)?;
    let corpus = load_corpus(corpus_path)?;
    let split = Split::from_name(split).ok_or_else(|| value_err(format!("unknown split {split:?}")))?;
    let eval: Vec<Instance> = corpus.split(split).into_iter().cloned().collect();
    let train: Vec<Instance> = corpus.split(Split::Train).into_iter().cloned().collect();
    let embedder = HashingEmbedder::default();
    let ctx = TrainContext::new(&train, Some(&embedder)).map_err(value_err)?;
    let p = partition_eval(&eval, criterion, &ctx).map_err(value_err)?;
    Ok(p.buckets()
        .into_iter()
        .flat_map(|(bucket, xs)| xs.iter().map(move |x| (x.id.clone(), x.score, bucket.as_str().to_string())))
        .collect())
}

/// Few-shot prompt from `(input, query)` example pairs.
#[pyfunction]
fn build_prompt(shots: Vec<(String, String)>, nl: &str) -> String {
    let instances: Vec<Instance> = shots
        .into_iter()
        .enumerate()
        .map(|(i, (input, query))| Instance::new(i.to_string(), input, query, Split::Train))
        .collect();
    let refs: Vec<&Instance> = instances.iter().collect();
    render_prompt(&refs, nl)
}

#[pymodule]
fn oqlkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(syntactic_units, m)?)?;
    m.add_function(wrap_pyfunction!(template, m)?)?;
    m.add_function(wrap_pyfunction!(kv_set, m)?)?;
    m.add_function(wrap_pyfunction!(chrf, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(em, m)?)?;
    m.add_function(wrap_pyfunction!(kvs, m)?)?;
    m.add_function(wrap_pyfunction!(trees, m)?)?;
    m.add_function(wrap_pyfunction!(oqs, m)?)?;
    m.add_function(wrap_pyfunction!(ex_soft, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    Ok(())
}
