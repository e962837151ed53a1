//! The (input, query, split) dataset format and corpus-level analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{detect_features, extract_comments, extract_kv, normalize_template, Feature, KvSet};
use crate::parser::parse;
use crate::tree::count_syntactic_units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "train" => Split::Train,
            "dev" => Split::Dev,
            "test" => Split::Test,
            _ => return None,
        })
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub nl: String,
    pub query: String,
    pub split: Split,
    /// Set on instances derived from query comments.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

impl Instance {
    pub fn new(id: impl Into<String>, nl: impl Into<String>, query: impl Into<String>, split: Split) -> Self {
        Instance { id: id.into(), nl: nl.into(), query: query.into(), split, synthetic: false }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field \"{field}\" is empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown split \"{split}\"")]
    UnknownSplit { line: usize, split: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    instances: Vec<Instance>,
    index: HashMap<String, usize>,
}

fn field<'a>(obj: &'a serde_json::Map<String, serde_json::Value>, line: usize, name: &'static str) -> Result<&'a str, CorpusError> {
    let v = obj.get(name).ok_or(CorpusError::MissingField { line, field: name })?;
    let s = match v {
        serde_json::Value::String(s) => s.as_str(),
        _ => {
            return Err(CorpusError::Malformed { line, message: format!("field \"{name}\" must be a string") })
        }
    };
    if s.trim().is_empty() {
        return Err(CorpusError::EmptyField { line, field: name });
    }
    Ok(s)
}

impl Corpus {
    pub fn new(instances: Vec<Instance>) -> Result<Self, CorpusError> {
        let mut c = Corpus::default();
        for (i, inst) in instances.into_iter().enumerate() {
            c.push(inst, i + 1)?;
        }
        Ok(c)
    }

    fn push(&mut self, inst: Instance, line: usize) -> Result<(), CorpusError> {
        if self.index.contains_key(&inst.id) {
            return Err(CorpusError::DuplicateId { line, id: inst.id });
        }
        self.index.insert(inst.id.clone(), self.instances.len());
        self.instances.push(inst);
        Ok(())
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, CorpusError> {
        let mut c = Corpus::default();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| CorpusError::Malformed { line: n, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Malformed { line: n, message: e.to_string() })?;
            let obj = value
                .as_object()
                .ok_or_else(|| CorpusError::Malformed { line: n, message: "expected a JSON object".into() })?;
            let split_name = field(obj, n, "split")?;
            let split = Split::from_name(split_name)
                .ok_or_else(|| CorpusError::UnknownSplit { line: n, split: split_name.to_string() })?;
            let synthetic = obj.get("synthetic").and_then(|v| v.as_bool()).unwrap_or(false);
            let inst = Instance {
                id: field(obj, n, "id")?.to_string(),
                nl: field(obj, n, "nl")?.to_string(),
                query: field(obj, n, "query")?.to_string(),
                split,
                synthetic,
            };
            c.push(inst, n)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(io::BufReader::new(file))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instances serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes JSONL atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    pub fn split(&self, split: Split) -> Vec<&Instance> {
        self.instances.iter().filter(|i| i.split == split).collect()
    }

    pub fn split_sizes(&self) -> BTreeMap<Split, usize> {
        let mut sizes: BTreeMap<Split, usize> = Split::ALL.iter().map(|s| (*s, 0)).collect();
        for i in &self.instances {
            *sizes.entry(i.split).or_default() += 1;
        }
        sizes
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Predictions file: JSONL lines with `id` and `query`.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let file = std::fs::File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    predictions_from_reader(io::BufReader::new(file))
}

pub fn predictions_from_reader(reader: impl BufRead) -> Result<BTreeMap<String, String>, CorpusError> {
    #[derive(Deserialize)]
    struct Prediction {
        id: String,
        query: String,
    }
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed { line: n, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed { line: n, message: e.to_string() })?;
        if out.insert(p.id.clone(), p.query).is_some() {
            return Err(CorpusError::DuplicateId { line: n, id: p.id });
        }
    }
    Ok(out)
}

pub fn predictions_to_jsonl(predictions: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (id, query) in predictions {
        out.push_str(&serde_json::json!({ "id": id, "query": query }).to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePrevalence {
    pub group: String,
    pub feature: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub id: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub instances: usize,
    pub split_sizes: BTreeMap<String, usize>,
    pub distinct_input_words: usize,
    pub mean_input_length: f64,
    pub mean_query_length: f64,
    pub parsed: usize,
    pub mean_syntactic_units: f64,
    pub distinct_templates: usize,
    pub unique_keys: usize,
    pub unique_values: usize,
    pub unique_pairs: usize,
    pub features: Vec<FeaturePrevalence>,
    pub parse_failures: Vec<ParseFailure>,
}

struct QueryFacts {
    units: usize,
    template: String,
    kv: KvSet,
    features: BTreeSet<Feature>,
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

pub fn stats(corpus: &Corpus) -> StatsReport {
    let instances = corpus.instances();
    let n = instances.len();
    let facts: Vec<Result<QueryFacts, ParseFailure>> = instances
        .par_iter()
        .map(|inst| match parse(&inst.query) {
            Ok(ast) => Ok(QueryFacts {
                units: count_syntactic_units(&ast),
                template: normalize_template(&ast),
                kv: extract_kv(&ast),
                features: detect_features(&ast),
            }),
            Err(e) => Err(ParseFailure { id: inst.id.clone(), line: e.line, column: e.column, message: e.message }),
        })
        .collect();

    let words: HashSet<String> = instances
        .iter()
        .flat_map(|i| i.nl.split_whitespace().map(|w| w.to_lowercase()))
        .collect();
    let input_chars: usize = instances.iter().map(|i| i.nl.chars().count()).sum();
    let query_chars: usize = instances.iter().map(|i| i.query.chars().count()).sum();

    let mut templates = HashSet::new();
    let mut kv = KvSet::default();
    let mut units = 0usize;
    let mut parsed = 0usize;
    let mut feature_counts: BTreeMap<Feature, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    for f in facts {
        match f {
            Ok(f) => {
                parsed += 1;
                units += f.units;
                templates.insert(f.template);
                kv.extend(&f.kv);
                for feat in f.features {
                    *feature_counts.entry(feat).or_default() += 1;
                }
            }
            Err(e) => failures.push(e),
        }
    }
    let features = Feature::ALL
        .iter()
        .map(|f| {
            let count = feature_counts.get(f).copied().unwrap_or(0);
            FeaturePrevalence {
                group: f.group().name().to_string(),
                feature: f.name().to_string(),
                count,
                percent: 100.0 * mean(count, n),
            }
        })
        .collect();

    StatsReport {
        instances: n,
        split_sizes: corpus.split_sizes().into_iter().map(|(s, c)| (s.to_string(), c)).collect(),
        distinct_input_words: words.len(),
        mean_input_length: mean(input_chars, n),
        mean_query_length: mean(query_chars, n),
        parsed,
        mean_syntactic_units: mean(units, parsed),
        distinct_templates: templates.len(),
        unique_keys: kv.keys.len(),
        unique_values: kv.values.len(),
        unique_pairs: kv.pairs.len(),
        features,
        parse_failures: failures,
    }
}

impl StatsReport {
    pub fn feature(&self, name: &str) -> Option<&FeaturePrevalence> {
        self.features.iter().find(|f| f.feature == name)
    }

    pub fn prevalence(&self, feature: Feature) -> Option<&FeaturePrevalence> {
        self.features.iter().find(|f| f.feature == feature.name() && f.group == feature.group().name())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instances {}", self.instances);
        for (split, count) in &self.split_sizes {
            let _ = writeln!(out, "split {split} {count}");
        }
        let _ = writeln!(out, "distinct input words {}", self.distinct_input_words);
        let _ = writeln!(out, "mean input length {:.1}", self.mean_input_length);
        let _ = writeln!(out, "mean query length {:.1}", self.mean_query_length);
        let _ = writeln!(out, "parsed queries {}", self.parsed);
        let _ = writeln!(out, "mean syntactic units {:.1}", self.mean_syntactic_units);
        let _ = writeln!(out, "distinct templates {}", self.distinct_templates);
        let _ = writeln!(out, "unique keys {}", self.unique_keys);
        let _ = writeln!(out, "unique values {}", self.unique_values);
        let _ = writeln!(out, "unique key-value pairs {}", self.unique_pairs);
        let _ = writeln!(out, "features:");
        let mut group = "";
        for f in &self.features {
            if f.group != group {
                group = &f.group;
                let _ = writeln!(out, "  {group}");
            }
            let _ = writeln!(out, "    {} ({}; {:.1}%)", f.feature, f.count, f.percent);
        }
        if !self.parse_failures.is_empty() {
            let _ = writeln!(out, "parse failures {}:", self.parse_failures.len());
            for p in &self.parse_failures {
                let _ = writeln!(out, "  {} line {} column {}: {}", p.id, p.line, p.column, p.message);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicateMode {
    /// Identical query text or identical input text.
    Exact,
    /// Exact, plus pairs whose templates and normalized inputs both agree.
    Near,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicateSide {
    Input,
    Query,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitViolation {
    pub train_id: String,
    pub eval_id: String,
    pub side: DuplicateSide,
}

/// Lowercased input with punctuation dropped and whitespace collapsed.
pub fn normalize_input(nl: &str) -> String {
    let cleaned: String = nl
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn template_of(query: &str) -> Option<String> {
    parse(query).ok().map(|a| normalize_template(&a))
}

/// Train/evaluation pairs that duplicate each other.
pub fn validate_splits(corpus: &Corpus, mode: DuplicateMode) -> Vec<SplitViolation> {
    let train = corpus.split(Split::Train);
    let eval: Vec<&Instance> =
        corpus.instances().iter().filter(|i| i.split != Split::Train).collect();
    if train.is_empty() || eval.is_empty() {
        return Vec::new();
    }
    let index = |key: &dyn Fn(&Instance) -> Option<String>| -> HashMap<String, Vec<usize>> {
        let mut m: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in train.iter().enumerate() {
            if let Some(k) = key(t) {
                m.entry(k).or_default().push(i);
            }
        }
        m
    };
    let by_query = index(&|i| Some(i.query.trim().to_string()));
    let by_input = index(&|i| Some(i.nl.trim().to_string()));
    let near = mode == DuplicateMode::Near;
    let by_near = if near {
        let templates: Vec<Option<String>> = train.par_iter().map(|t| template_of(&t.query)).collect();
        let mut m: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (i, t) in train.iter().enumerate() {
            if let Some(tpl) = &templates[i] {
                m.entry((tpl.clone(), normalize_input(&t.nl))).or_default().push(i);
            }
        }
        m
    } else {
        HashMap::new()
    };

    let mut out = Vec::new();
    for e in eval {
        let mut hits: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
        for &i in by_query.get(e.query.trim()).into_iter().flatten() {
            hits.entry(i).or_default().1 = true;
        }
        for &i in by_input.get(e.nl.trim()).into_iter().flatten() {
            hits.entry(i).or_default().0 = true;
        }
        if near {
            if let Some(tpl) = template_of(&e.query) {
                for &i in by_near.get(&(tpl, normalize_input(&e.nl))).into_iter().flatten() {
                    *hits.entry(i).or_default() = (true, true);
                }
            }
        }
        for (i, (input, query)) in hits {
            let side = match (input, query) {
                (true, true) => DuplicateSide::Both,
                (true, false) => DuplicateSide::Input,
                _ => DuplicateSide::Query,
            };
            out.push(SplitViolation { train_id: train[i].id.clone(), eval_id: e.id.clone(), side });
        }
    }
    out
}

/// One synthetic training instance per commented train query: the comments,
/// joined by a space, as input and the comment-free query as target.
pub fn comment_instances(corpus: &Corpus) -> Vec<Instance> {
    corpus
        .split(Split::Train)
        .into_iter()
        .filter_map(|inst| {
            let found = extract_comments(&inst.query);
            let stripped = found.first()?.1.clone();
            let text: Vec<String> = found
                .into_iter()
                .map(|(c, _)| c.split_whitespace().collect::<Vec<_>>().join(" "))
                .filter(|c| !c.is_empty())
                .collect();
            if text.is_empty() || stripped.trim().is_empty() {
                return None;
            }
            Some(Instance {
                id: format!("{}-comments", inst.id),
                nl: text.join(" "),
                query: stripped,
                split: Split::Train,
                synthetic: true,
            })
        })
        .collect()
}

/// Key usage table: `key<TAB>count` lines.
pub fn parse_key_usage(text: &str) -> Result<Vec<(String, u64)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, count) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::Malformed { line: i + 1, message: "expected key<TAB>count".into() })?;
        let count = count
            .trim()
            .parse()
            .map_err(|_| CorpusError::Malformed { line: i + 1, message: format!("invalid count \"{count}\"") })?;
        out.push((key.to_string(), count));
    }
    Ok(out)
}

pub fn corpus_keys(corpus: &Corpus) -> BTreeSet<String> {
    corpus
        .instances()
        .par_iter()
        .filter_map(|i| parse(&i.query).ok())
        .map(|a| extract_kv(&a).keys)
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        })
}

/// Share of total key usage accounted for by keys the corpus uses.
pub fn key_coverage(corpus: &Corpus, usage: &[(String, u64)]) -> f64 {
    let total: u64 = usage.iter().map(|(_, c)| c).sum();
    if total == 0 || corpus.is_empty() {
        return 0.0;
    }
    let keys = corpus_keys(corpus);
    let covered: u64 = usage.iter().filter(|(k, _)| keys.contains(k)).map(|(_, c)| c).sum();
    covered as f64 / total as f64
}
