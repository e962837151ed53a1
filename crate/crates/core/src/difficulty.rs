//! Instance difficulty criteria and easy/medium/hard partitioning.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Instance;
use crate::embedding::{cosine, EmbedError, EmbeddingProvider};
use crate::metrics::{chrf_profiles, oqs_prepared, ChrfProfile, OqsBreakdown, PreparedQuery, Score};
use crate::parser::parse;
use crate::tree::count_syntactic_units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyCriterion {
    InputLength,
    QueryLength,
    SyntacticUnits,
    MaxInputSimilarity,
    MaxQueryOqs,
}

impl DifficultyCriterion {
    pub const ALL: [DifficultyCriterion; 5] = [
        DifficultyCriterion::InputLength,
        DifficultyCriterion::QueryLength,
        DifficultyCriterion::SyntacticUnits,
        DifficultyCriterion::MaxInputSimilarity,
        DifficultyCriterion::MaxQueryOqs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyCriterion::InputLength => "input_length",
            DifficultyCriterion::QueryLength => "query_length",
            DifficultyCriterion::SyntacticUnits => "syntactic_units",
            DifficultyCriterion::MaxInputSimilarity => "max_input_similarity",
            DifficultyCriterion::MaxQueryOqs => "max_query_oqs",
        }
    }

    /// Higher scores mean easier instances.
    pub fn is_similarity(self) -> bool {
        matches!(self, DifficultyCriterion::MaxInputSimilarity | DifficultyCriterion::MaxQueryOqs)
    }
}

impl fmt::Display for DifficultyCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyCriterion {
    type Err = DifficultyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| DifficultyError::UnknownCriterion(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum DifficultyError {
    #[error("unknown difficulty criterion \"{0}\"")]
    UnknownCriterion(String),
    #[error("criterion {0} needs an embedding provider")]
    MissingProvider(DifficultyCriterion),
    #[error("criterion {0} needs a non-empty training set")]
    EmptyTrain(DifficultyCriterion),
    #[error("{0}")]
    Embedding(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Easy,
    Medium,
    Hard,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Easy => "easy",
            Bucket::Medium => "medium",
            Bucket::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub criterion: DifficultyCriterion,
    pub easy: Vec<ScoredInstance>,
    pub medium: Vec<ScoredInstance>,
    pub hard: Vec<ScoredInstance>,
}

/// Training-side data shared by all scored instances.
pub struct TrainContext<'a> {
    train: &'a [Instance],
    queries: Vec<(ChrfProfile, Option<PreparedQuery>)>,
    inputs: Option<Vec<Vec<f32>>>,
    provider: Option<&'a dyn EmbeddingProvider>,
}

impl<'a> TrainContext<'a> {
    pub fn new(train: &'a [Instance], provider: Option<&'a dyn EmbeddingProvider>) -> Result<Self, DifficultyError> {
        let queries = train
            .par_iter()
            .map(|t| (ChrfProfile::new(&t.query), PreparedQuery::parse(&t.query).ok()))
            .collect();
        let inputs = match provider {
            Some(p) => Some(
                train.par_iter().map(|t| p.embed(&t.id, &t.nl)).collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        Ok(TrainContext { train, queries, inputs, provider })
    }

    /// Highest OQS of `query` against any training query.
    pub fn max_query_oqs(&self, query: &str) -> f64 {
        let hyp = PreparedQuery::parse(query).ok();
        let profile = ChrfProfile::new(query);
        self.train
            .iter()
            .zip(&self.queries)
            .map(|(t, (tp, prepared))| {
                let c = chrf_profiles(&profile, tp);
                match (&hyp, prepared) {
                    (Some(h), Some(r)) => oqs_prepared(query, &t.query, h, r, Some(c)).oqs.0,
                    _ => OqsBreakdown::from_components(c, Score(0.0), Score(0.0), hyp.is_some()).oqs.0,
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Raw criterion value. Lengths count characters; an unparsable query has
/// zero syntactic units.
pub fn score(instance: &Instance, criterion: DifficultyCriterion, ctx: &TrainContext) -> Result<f64, DifficultyError> {
    Ok(match criterion {
        DifficultyCriterion::InputLength => instance.nl.chars().count() as f64,
        DifficultyCriterion::QueryLength => instance.query.chars().count() as f64,
        DifficultyCriterion::SyntacticUnits => {
            parse(&instance.query).map(|a| count_syntactic_units(&a)).unwrap_or(0) as f64
        }
        DifficultyCriterion::MaxQueryOqs => {
            if ctx.train.is_empty() {
                return Err(DifficultyError::EmptyTrain(criterion));
            }
            ctx.max_query_oqs(&instance.query)
        }
        DifficultyCriterion::MaxInputSimilarity => {
            let (Some(p), Some(inputs)) = (ctx.provider, &ctx.inputs) else {
                return Err(DifficultyError::MissingProvider(criterion));
            };
            if inputs.is_empty() {
                return Err(DifficultyError::EmptyTrain(criterion));
            }
            let v = p.embed(&instance.id, &instance.nl)?;
            inputs.iter().map(|t| cosine(&v, t)).fold(f64::NEG_INFINITY, f64::max)
        }
    })
}

/// Bucket sizes for `n` instances: thirds, with the remainder going to easy
/// first and then medium.
pub fn bucket_sizes(n: usize) -> [usize; 3] {
    let base = n / 3;
    let rem = n % 3;
    [base + usize::from(rem >= 1), base + usize::from(rem >= 2), base]
}

/// Orders instances from easiest to hardest (ties by id) and cuts the list
/// into thirds.
pub fn partition_scored(criterion: DifficultyCriterion, mut scored: Vec<ScoredInstance>) -> Partition {
    scored.sort_by(|a, b| {
        let by_score = if criterion.is_similarity() { b.score.total_cmp(&a.score) } else { a.score.total_cmp(&b.score) };
        match by_score {
            Ordering::Equal => a.id.cmp(&b.id),
            o => o,
        }
    });
    let [easy, medium, _] = bucket_sizes(scored.len());
    let hard = scored.split_off(easy + medium);
    let medium_part = scored.split_off(easy);
    Partition { criterion, easy: scored, medium: medium_part, hard }
}

pub fn partition(
    eval: &[Instance],
    criterion: DifficultyCriterion,
    ctx: &TrainContext,
) -> Result<Partition, DifficultyError> {
    let scored = eval
        .par_iter()
        .map(|i| Ok(ScoredInstance { id: i.id.clone(), score: score(i, criterion, ctx)? }))
        .collect::<Result<Vec<_>, DifficultyError>>()?;
    Ok(partition_scored(criterion, scored))
}

impl Partition {
    pub fn len(&self) -> usize {
        self.easy.len() + self.medium.len() + self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn buckets(&self) -> [(Bucket, &[ScoredInstance]); 3] {
        [(Bucket::Easy, &self.easy), (Bucket::Medium, &self.medium), (Bucket::Hard, &self.hard)]
    }

    pub fn bucket_of(&self, id: &str) -> Option<Bucket> {
        self.buckets().into_iter().find(|(_, xs)| xs.iter().any(|x| x.id == id)).map(|(b, _)| b)
    }

    /// `id<TAB>criterion<TAB>score<TAB>bucket` lines, easiest first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (bucket, xs) in self.buckets() {
            for x in xs {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", x.id, self.criterion, x.score, bucket.as_str());
            }
        }
        out
    }
}
