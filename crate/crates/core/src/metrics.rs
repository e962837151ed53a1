//! Query similarity and execution metrics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::analysis::{extract_kv, KvSet};
use crate::parser::{parse, ParseError};
use crate::tree::{to_syntax_tree, SyntaxTree};

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;
pub const BLEU_ORDER: usize = 4;

/// A metric value in `[0, 1]`, displayed as a percentage with one decimal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(pub f64);

impl Score {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn percent(self) -> f64 {
        (self.0 * 1000.0).round() / 10.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.percent())
    }
}

fn clipped_matches<K: std::hash::Hash + Eq>(hyp: &HashMap<K, usize>, reference: &HashMap<K, usize>) -> usize {
    let (small, large) = if hyp.len() <= reference.len() { (hyp, reference) } else { (reference, hyp) };
    small
        .iter()
        .map(|(g, c)| (*c).min(large.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Character n-gram counts of one string, reusable across many comparisons.
#[derive(Debug, Clone)]
pub struct ChrfProfile {
    text: String,
    grams: Vec<HashMap<String, usize>>,
    totals: Vec<usize>,
}

impl ChrfProfile {
    pub fn new(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let mut grams = Vec::with_capacity(CHRF_ORDER);
        let mut totals = Vec::with_capacity(CHRF_ORDER);
        for n in 1..=CHRF_ORDER {
            let mut counts: HashMap<String, usize> = HashMap::new();
            if chars.len() >= n {
                for w in chars.windows(n) {
                    *counts.entry(w.iter().collect()).or_insert(0) += 1;
                }
            }
            totals.push(chars.len().saturating_sub(n - 1));
            grams.push(counts);
        }
        ChrfProfile { text: text.to_string(), grams, totals }
    }
}

/// Character n-gram F-score, orders 1 to 6, beta 2, whitespace kept.
///
/// Precision and recall are averaged over the orders for which both strings
/// have n-grams, then combined.
pub fn chrf(hyp: &str, reference: &str) -> Score {
    if hyp == reference {
        return Score(1.0);
    }
    chrf_profiles(&ChrfProfile::new(hyp), &ChrfProfile::new(reference))
}

pub fn chrf_profiles(h: &ChrfProfile, r: &ChrfProfile) -> Score {
    if h.text == r.text {
        return Score(1.0);
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut effective = 0usize;
    for i in 0..CHRF_ORDER {
        let (h_total, r_total) = (h.totals[i], r.totals[i]);
        if h_total == 0 || r_total == 0 {
            continue;
        }
        let m = clipped_matches(&h.grams[i], &r.grams[i]) as f64;
        precision += m / h_total as f64;
        recall += m / r_total as f64;
        effective += 1;
    }
    if effective == 0 {
        return Score(0.0);
    }
    let p = precision / effective as f64;
    let r = recall / effective as f64;
    if p + r == 0.0 {
        return Score(0.0);
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    Score((1.0 + b2) * p * r / (b2 * p + r))
}

/// Sentence BLEU over whitespace tokens, orders 1 to 4, add-one smoothing
/// for orders above 1, with brevity penalty.
pub fn bleu(hyp: &str, reference: &str) -> Score {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if h == r {
        return Score(1.0);
    }
    if h.is_empty() || r.is_empty() {
        return Score(0.0);
    }
    let grams = |toks: &[&str], n: usize| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        if toks.len() >= n {
            for w in toks.windows(n) {
                *m.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
            }
        }
        m
    };
    let mut log_sum = 0.0;
    for n in 1..=BLEU_ORDER {
        let hg = grams(&h, n);
        let rg = grams(&r, n);
        let total: usize = hg.values().sum();
        let m = clipped_matches(&hg, &rg);
        let p = if n == 1 {
            if m == 0 {
                return Score(0.0);
            }
            m as f64 / total as f64
        } else {
            (m as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln() / BLEU_ORDER as f64;
    }
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let bp = if c > rl { 1.0 } else { (1.0 - rl / c).exp() };
    Score((bp * log_sum.exp()).min(1.0))
}

/// Key value similarity. Keys, values and pairs live in separate namespaces.
pub fn kvs(a: &KvSet, b: &KvSet) -> Score {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Score(1.0),
        (true, false) | (false, true) => return Score(0.0),
        _ => {}
    }
    let shared = a.pairs.intersection(&b.pairs).count()
        + a.keys.intersection(&b.keys).count()
        + a.values.intersection(&b.values).count();
    Score(shared as f64 / a.len().max(b.len()) as f64)
}

/// Assigns each distinct subtree shape an id; shared between trees so ids
/// are comparable.
#[derive(Default)]
struct SubtreeInterner {
    ids: HashMap<(String, Vec<usize>), usize>,
}

impl SubtreeInterner {
    fn intern(&mut self, t: &SyntaxTree, counts: &mut HashMap<usize, usize>) -> usize {
        let children: Vec<usize> = t.children.iter().map(|c| self.intern(c, counts)).collect();
        let next = self.ids.len();
        let id = *self.ids.entry((t.label.clone(), children)).or_insert(next);
        *counts.entry(id).or_insert(0) += 1;
        id
    }
}

/// Number of subtrees shared by `a` and `b`, counted with multiplicity.
pub fn matching_subtrees(a: &SyntaxTree, b: &SyntaxTree) -> usize {
    let mut interner = SubtreeInterner::default();
    let mut ca = HashMap::new();
    let mut cb = HashMap::new();
    interner.intern(a, &mut ca);
    interner.intern(b, &mut cb);
    ca.iter().map(|(id, n)| (*n).min(cb.get(id).copied().unwrap_or(0))).sum()
}

/// Tree similarity: shared subtrees over the larger subtree count.
pub fn trees(a: &SyntaxTree, b: &SyntaxTree) -> Score {
    let denom = a.node_count().max(b.node_count());
    Score(matching_subtrees(a, b) as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OqsBreakdown {
    pub chrf: Score,
    pub kvs: Score,
    pub trees: Score,
    pub oqs: Score,
    /// False when the hypothesis did not parse and the structural parts are zero.
    pub hyp_parsed: bool,
}

impl OqsBreakdown {
    pub fn from_components(chrf: Score, kvs: Score, trees: Score, hyp_parsed: bool) -> Self {
        let oqs = Score((chrf.0 + kvs.0 + trees.0) / 3.0);
        OqsBreakdown { chrf, kvs, trees, oqs, hyp_parsed }
    }
}

/// Overpass query similarity. The reference must parse; an unparsable
/// hypothesis keeps its chrF and scores zero on KVS and TreeS.
pub fn oqs(hyp: &str, reference: &str) -> Result<OqsBreakdown, ParseError> {
    let r = parse(reference)?;
    Ok(oqs_with_reference(hyp, reference, &PreparedQuery::from_ast(&r)))
}

/// Reference-side data reused across many hypotheses.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub kv: KvSet,
    pub tree: SyntaxTree,
}

impl PreparedQuery {
    pub fn from_ast(ast: &crate::ast::QueryAst) -> Self {
        PreparedQuery { kv: extract_kv(ast), tree: to_syntax_tree(ast) }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse(text).map(|a| Self::from_ast(&a))
    }
}

pub fn oqs_with_reference(hyp: &str, reference: &str, prepared: &PreparedQuery) -> OqsBreakdown {
    let c = chrf(hyp, reference);
    match PreparedQuery::parse(hyp) {
        Ok(h) => oqs_prepared(hyp, reference, &h, prepared, Some(c)),
        Err(_) => OqsBreakdown::from_components(c, Score(0.0), Score(0.0), false),
    }
}

/// OQS between two already-prepared queries.
pub fn oqs_prepared(
    hyp: &str,
    reference: &str,
    h: &PreparedQuery,
    r: &PreparedQuery,
    chrf_score: Option<Score>,
) -> OqsBreakdown {
    let c = chrf_score.unwrap_or_else(|| chrf(hyp, reference));
    OqsBreakdown::from_components(c, kvs(&h.kv, &r.kv), trees(&h.tree, &r.tree), true)
}

/// Exact match after NFC normalization and trimming outer whitespace.
pub fn em(hyp: &str, reference: &str) -> bool {
    let norm = |s: &str| s.nfc().collect::<String>().trim().to_string();
    norm(hyp) == norm(reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsmKind {
    Node,
    Way,
    Relation,
    Area,
}

impl OsmKind {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "node" => Self::Node,
            "way" => Self::Way,
            "relation" | "rel" => Self::Relation,
            "area" => Self::Area,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Node => "node",
            Self::Way => "way",
            Self::Relation => "relation",
            Self::Area => "area",
        }
    }
}

/// Identity of a returned element. Elements produced by `make`/`convert`
/// have no OSM id and are identified by a hash of their content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRef {
    Osm { kind: OsmKind, id: u64 },
    Derived { content_hash: String },
}

impl ElementRef {
    pub fn osm(kind: OsmKind, id: u64) -> Self {
        ElementRef::Osm { kind, id }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Osm { kind, id } => write!(f, "{}/{}", kind.as_str(), id),
            ElementRef::Derived { content_hash } => write!(f, "derived/{content_hash}"),
        }
    }
}

pub type ElementSet = BTreeSet<ElementRef>;

/// Execution exact match: both runs returned the same elements.
pub fn ex(generated: &ElementSet, reference: &ElementSet) -> bool {
    generated == reference
}

/// Shared elements over the larger result size; both empty scores 1.
pub fn ex_soft(generated: &ElementSet, reference: &ElementSet) -> Score {
    let denom = generated.len().max(reference.len());
    if denom == 0 {
        return Score(1.0);
    }
    Score(generated.intersection(reference).count() as f64 / denom as f64)
}
