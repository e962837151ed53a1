//! Few-shot generation and refinement prompts.

use crate::corpus::Instance;

pub const PREAMBLE: &str =
    "The OverpassQL language allows one to formulate questions to the OpenStreetMap database.";
pub const REFINE_GOAL: &str = "Your goal is, given an Input and a Hypothesis, to produce a improved version of the Hypothesis.\nIf the Hypothesis is already good enough, do not try to improve it.";
pub const EXAMPLES_HEADER: &str = "Here are a few examples:";
pub const FEEDBACK_FRAMING: &str = "You will now get part of the Overpass result produced after using the generated Overpass Query Hypothesis. An error means that you should definitely improve on the Hypothesis. A normal result could mean that the Overpass Query is good enough, if the output fits to the asked query:";
pub const REFINE_CLOSING: &str = "Improve on the Overpass Query or keep it if it is good enough:";
/// Generation stops before the model starts another example.
pub const STOP_SEQUENCE: &str = "\n\nInput:";

/// A refinement example: input, a model hypothesis and the reference query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineShot {
    pub nl: String,
    pub hypothesis: String,
    pub query: String,
}

fn block(out: &mut String, label: &str, text: &str) {
    out.push_str(label);
    out.push('\n');
    out.push_str(text.trim_end_matches('\n'));
    out.push_str("\n\n");
}

pub fn build_prompt(shots: &[&Instance], nl: &str) -> String {
    let mut out = format!("{PREAMBLE}\n\n");
    if !shots.is_empty() {
        out.push_str(EXAMPLES_HEADER);
        out.push_str("\n\n");
    }
    for s in shots {
        block(&mut out, "Input:", &s.nl);
        block(&mut out, "Overpass Query:", &s.query);
    }
    block(&mut out, "Input:", nl);
    out.push_str("Overpass Query:\n");
    out
}

/// `feedback` of `None` gives the variant without execution feedback.
pub fn build_refine_prompt(nl: &str, hypothesis: &str, feedback: Option<&str>, shots: &[RefineShot]) -> String {
    let mut out = format!("{PREAMBLE}\n{REFINE_GOAL}\n\n");
    if !shots.is_empty() {
        out.push_str(EXAMPLES_HEADER);
        out.push_str("\n\n");
    }
    for s in shots {
        block(&mut out, "Input:", &s.nl);
        block(&mut out, "Hypothesis:", &s.hypothesis);
        block(&mut out, "Overpass Query:", &s.query);
    }
    block(&mut out, "Here is an Input:", nl);
    block(&mut out, "Here is the Overpass Query Hypothesis produced by a model:", hypothesis);
    if let Some(f) = feedback {
        block(&mut out, FEEDBACK_FRAMING, f);
    }
    out.push_str(REFINE_CLOSING);
    out.push('\n');
    out
}

/// Removes a surrounding Markdown code fence and outer whitespace.
pub fn strip_code_fence(text: &str) -> String {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = match rest.find('\n') {
            Some(i) => &rest[i + 1..],
            None => rest,
        };
        let body = body.trim_end();
        let body = body.strip_suffix("```").unwrap_or(body);
        return body.trim().to_string();
    }
    t.to_string()
}

/// Cuts `text` at the first occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stops: &[&str]) -> String {
    let end = stops.iter().filter_map(|s| text.find(s)).min().unwrap_or(text.len());
    text[..end].to_string()
}
