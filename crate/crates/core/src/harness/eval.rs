//! Scoring predictions against references.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::executor::{ExecutionStatus, Executor};
use crate::metrics::{chrf, em, ex, ex_soft, oqs_with_reference, OqsBreakdown, PreparedQuery, Score};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub chrf: f64,
    pub kvs: f64,
    pub trees: f64,
    pub oqs: f64,
    pub em: bool,
    pub status: Option<ExecutionStatus>,
    pub ex: Option<bool>,
    pub ex_soft: Option<f64>,
    pub missing_prediction: bool,
    pub reference_unparsable: bool,
    pub reference_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregates {
    pub instances: usize,
    pub chrf: f64,
    pub kvs: f64,
    pub trees: f64,
    pub oqs: f64,
    pub em: f64,
    pub errors: usize,
    pub ex: Option<f64>,
    pub ex_soft: Option<f64>,
    /// Rows counted in EX and EX_soft.
    pub executed: usize,
    pub reference_failures: usize,
    pub missing_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: EvalAggregates,
}

fn score_row(inst: &Instance, prediction: Option<&String>, executor: Option<&Executor>) -> EvalRow {
    let hyp = prediction.map(String::as_str).unwrap_or("");
    let (breakdown, reference_unparsable) = match PreparedQuery::parse(&inst.query) {
        Ok(r) => (oqs_with_reference(hyp, &inst.query, &r), false),
        Err(_) => (OqsBreakdown::from_components(chrf(hyp, &inst.query), Score(0.0), Score(0.0), false), true),
    };
    let mut row = EvalRow {
        id: inst.id.clone(),
        chrf: breakdown.chrf.0,
        kvs: breakdown.kvs.0,
        trees: breakdown.trees.0,
        oqs: breakdown.oqs.0,
        em: em(hyp, &inst.query),
        status: None,
        ex: None,
        ex_soft: None,
        missing_prediction: prediction.is_none(),
        reference_unparsable,
        reference_failed: false,
    };
    if let Some(exec) = executor {
        let generated = exec.execute(hyp);
        row.status = Some(generated.status);
        let reference = exec.execute(&inst.query);
        match (&reference.elements, reference.is_ok()) {
            (Some(r), true) => {
                let g = generated.elements.clone().unwrap_or_default();
                let ok = generated.is_ok();
                row.ex = Some(ok && ex(&g, r));
                row.ex_soft = Some(if ok { ex_soft(&g, r).0 } else { 0.0 });
            }
            _ => row.reference_failed = true,
        }
    }
    row
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores every instance of `eval`; a missing prediction counts as the empty
/// string. With an executor, both sides are run and EX/EX_soft averaged over
/// rows whose reference executed.
pub fn run_eval(eval: &[Instance], predictions: &BTreeMap<String, String>, executor: Option<&Executor>) -> EvalReport {
    let rows: Vec<EvalRow> = eval.par_iter().map(|i| score_row(i, predictions.get(&i.id), executor)).collect();
    let aggregates = aggregate(&rows, executor.is_some());
    EvalReport { rows, aggregates }
}

pub fn aggregate(rows: &[EvalRow], executed: bool) -> EvalAggregates {
    let exec_rows: Vec<&EvalRow> = rows.iter().filter(|r| r.ex.is_some()).collect();
    EvalAggregates {
        instances: rows.len(),
        chrf: 100.0 * mean(rows.iter().map(|r| r.chrf)),
        kvs: 100.0 * mean(rows.iter().map(|r| r.kvs)),
        trees: 100.0 * mean(rows.iter().map(|r| r.trees)),
        oqs: 100.0 * mean(rows.iter().map(|r| r.oqs)),
        em: 100.0 * mean(rows.iter().map(|r| if r.em { 1.0 } else { 0.0 })),
        errors: rows.iter().filter(|r| r.status == Some(ExecutionStatus::SyntaxError)).count(),
        ex: executed.then(|| 100.0 * mean(exec_rows.iter().map(|r| if r.ex == Some(true) { 1.0 } else { 0.0 }))),
        ex_soft: executed.then(|| 100.0 * mean(exec_rows.iter().filter_map(|r| r.ex_soft))),
        executed: exec_rows.len(),
        reference_failures: rows.iter().filter(|r| r.reference_failed).count(),
        missing_predictions: rows.iter().filter(|r| r.missing_prediction).count(),
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

impl EvalReport {
    pub const TSV_HEADER: &'static str = "id\tchrf\tkvs\ttrees\toqs\tem\tstatus\tex\tex_soft";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::TSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
                r.id,
                r.chrf,
                r.kvs,
                r.trees,
                r.oqs,
                u8::from(r.em),
                opt(r.status.map(|s| s.as_str())),
                opt(r.ex.map(u8::from)),
                opt(r.ex_soft.map(|x| format!("{x:.6}"))),
            );
        }
        out
    }

    /// One header and one value line, in the column order of the results tables.
    pub fn to_table(&self) -> String {
        let a = &self.aggregates;
        let pct = |x: Option<f64>| x.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
        let errors = if a.ex.is_some() { a.errors.to_string() } else { "-".into() };
        let cols = [
            ("chrF", format!("{:.1}", a.chrf)),
            ("KVS", format!("{:.1}", a.kvs)),
            ("TreeS", format!("{:.1}", a.trees)),
            ("OQS", format!("{:.1}", a.oqs)),
            ("EM", format!("{:.1}", a.em)),
            ("#Errors", errors),
            ("EX", pct(a.ex)),
            ("EX_soft", pct(a.ex_soft)),
        ];
        let mut head = String::new();
        let mut vals = String::new();
        for (name, v) in &cols {
            let w = name.len().max(v.len());
            let _ = write!(head, "{name:>w$}  ");
            let _ = write!(vals, "{v:>w$}  ");
        }
        let mut out = format!("{}\n{}\n", head.trim_end(), vals.trim_end());
        if a.reference_failures > 0 {
            let _ = writeln!(out, "reference executions failed: {}", a.reference_failures);
        }
        if a.missing_predictions > 0 {
            let _ = writeln!(out, "missing predictions: {}", a.missing_predictions);
        }
        out
    }
}
