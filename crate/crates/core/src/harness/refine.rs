//! One round of self-refinement with optional execution feedback.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::GenerationClient;
use super::prompt::{build_refine_prompt, strip_code_fence, RefineShot, STOP_SEQUENCE};
use super::shots::ShotSelector;
use super::HarnessError;
use crate::corpus::Instance;
use crate::executor::{feedback_from_outcome, ExecutionStatus, Executor, SAMPLE_LIMIT};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    #[default]
    Off,
    ErrorsOnly,
    All,
}

impl FromStr for RefineMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(RefineMode::Off),
            "errors_only" | "errors-only" => Ok(RefineMode::ErrorsOnly),
            "all" => Ok(RefineMode::All),
            _ => Err(HarnessError::Config(format!("unknown refine mode \"{s}\""))),
        }
    }
}

impl fmt::Display for RefineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefineMode::Off => "off",
            RefineMode::ErrorsOnly => "errors_only",
            RefineMode::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinePolicy {
    pub mode: RefineMode,
    pub with_feedback: bool,
}

#[derive(Debug, Clone)]
pub struct RefineOptions {
    pub max_tokens: usize,
    /// Result lines shown as feedback for a successful execution.
    pub sample_size: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { max_tokens: 512, sample_size: SAMPLE_LIMIT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub id: String,
    pub baseline_status: Option<ExecutionStatus>,
    pub refined: bool,
    /// Set when generation failed and the baseline was kept.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub predictions: BTreeMap<String, String>,
    pub records: Vec<RefineRecord>,
}

impl RefineResult {
    pub fn refined_count(&self) -> usize {
        self.records.iter().filter(|r| r.refined).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RefineRecord> {
        self.records.iter().filter(|r| r.failure.is_some())
    }
}

/// Inputs to a refinement round besides the instances themselves.
pub struct Refiner<'a> {
    pub policy: RefinePolicy,
    pub client: &'a dyn GenerationClient,
    pub executor: Option<&'a Executor>,
    pub shots: Option<&'a ShotSelector<'a>>,
    /// Model hypotheses for training instances used as refine shots; a shot
    /// without one shows its reference as the hypothesis.
    pub shot_hypotheses: &'a BTreeMap<String, String>,
    pub options: RefineOptions,
}

impl Refiner<'_> {
    /// Refines `baseline` predictions. Instances outside the policy, and
    /// instances whose generation fails, keep their baseline text.
    pub fn run(&self, instances: &[Instance], baseline: &BTreeMap<String, String>) -> Result<RefineResult, HarnessError> {
        if self.policy.mode == RefineMode::Off {
            return Ok(RefineResult { predictions: baseline.clone(), records: Vec::new() });
        }
        let needs_execution = self.policy.mode == RefineMode::ErrorsOnly || self.policy.with_feedback;
        if needs_execution && self.executor.is_none() {
            return Err(HarnessError::Config("refinement with execution needs an executor".into()));
        }
        let results: Vec<(Option<(String, String)>, RefineRecord)> = instances
            .par_iter()
            .map(|inst| self.refine_one(inst, baseline.get(&inst.id)))
            .collect::<Result<_, _>>()?;
        let mut predictions = baseline.clone();
        let mut records = Vec::new();
        for (update, record) in results {
            if let Some((id, q)) = update {
                predictions.insert(id, q);
            }
            records.push(record);
        }
        Ok(RefineResult { predictions, records })
    }

    fn refine_one(
        &self,
        inst: &Instance,
        hyp: Option<&String>,
    ) -> Result<(Option<(String, String)>, RefineRecord), HarnessError> {
        let mut record = RefineRecord { id: inst.id.clone(), baseline_status: None, refined: false, failure: None };
        let Some(hyp) = hyp else {
            record.failure = Some("no baseline prediction".into());
            return Ok((None, record));
        };
        let outcome = self.executor.map(|e| e.execute(hyp));
        record.baseline_status = outcome.as_ref().map(|o| o.status);
        if self.policy.mode == RefineMode::ErrorsOnly && record.baseline_status != Some(ExecutionStatus::SyntaxError) {
            return Ok((None, record));
        }
        let feedback = match (&outcome, self.policy.with_feedback) {
            (Some(o), true) => Some(feedback_from_outcome(o, self.options.sample_size)),
            _ => None,
        };
        let shots: Vec<RefineShot> = match self.shots {
            Some(sel) => sel
                .select(inst)?
                .into_iter()
                .map(|s| RefineShot {
                    nl: s.nl.clone(),
                    hypothesis: self.shot_hypotheses.get(&s.id).cloned().unwrap_or_else(|| s.query.clone()),
                    query: s.query.clone(),
                })
                .collect(),
            None => Vec::new(),
        };
        let prompt = build_refine_prompt(&inst.nl, hyp, feedback.as_deref(), &shots);
        match self.client.generate(&prompt, &[STOP_SEQUENCE], self.options.max_tokens) {
            Ok(text) => {
                let refined = strip_code_fence(&text);
                if refined.is_empty() {
                    record.failure = Some("empty completion".into());
                    return Ok((None, record));
                }
                record.refined = true;
                Ok((Some((inst.id.clone(), refined)), record))
            }
            Err(e) => {
                record.failure = Some(e.to_string());
                Ok((None, record))
            }
        }
    }
}
