//! In-context example selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::corpus::Instance;
use crate::embedding::{cosine, EmbeddingProvider};
use crate::metrics::bleu;

pub const DEFAULT_SHOTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShotStrategy {
    Random { seed: u64 },
    RetrievalBleu,
    RetrievalEmbedding,
}

impl fmt::Display for ShotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotStrategy::Random { seed } => write!(f, "random:{seed}"),
            ShotStrategy::RetrievalBleu => f.write_str("bleu"),
            ShotStrategy::RetrievalEmbedding => f.write_str("embedding"),
        }
    }
}

impl FromStr for ShotStrategy {
    type Err = HarnessError;

    /// `random:<seed>`, `bleu` or `embedding`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" | "retrieval_bleu" => Ok(ShotStrategy::RetrievalBleu),
            "embedding" | "retrieval_embedding" => Ok(ShotStrategy::RetrievalEmbedding),
            _ => {
                let seed = s
                    .strip_prefix("random:")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| HarnessError::Config(format!("unknown shot strategy \"{s}\"")))?;
                Ok(ShotStrategy::Random { seed })
            }
        }
    }
}

/// Where the most similar shot goes in the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotOrder {
    #[default]
    MostSimilarLast,
    MostSimilarFirst,
}

/// Selects shots from a fixed training set; embeddings of the training
/// inputs are computed once.
pub struct ShotSelector<'a> {
    train: &'a [Instance],
    strategy: ShotStrategy,
    k: usize,
    order: ShotOrder,
    provider: Option<&'a dyn EmbeddingProvider>,
    train_vectors: Vec<Vec<f32>>,
}

impl<'a> ShotSelector<'a> {
    pub fn new(
        train: &'a [Instance],
        strategy: ShotStrategy,
        k: usize,
        provider: Option<&'a dyn EmbeddingProvider>,
    ) -> Result<Self, HarnessError> {
        let train_vectors = match strategy {
            ShotStrategy::RetrievalEmbedding => {
                let p = provider.ok_or(HarnessError::MissingProvider)?;
                train.par_iter().map(|t| p.embed(&t.id, &t.nl)).collect::<Result<Vec<_>, _>>()?
            }
            _ => Vec::new(),
        };
        Ok(ShotSelector { train, strategy, k, order: ShotOrder::default(), provider, train_vectors })
    }

    pub fn with_order(mut self, order: ShotOrder) -> Self {
        self.order = order;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Similarity of every usable training instance to `input`; the input
    /// itself is never a candidate.
    pub fn similarities(&self, input: &Instance) -> Result<Vec<(usize, f64)>, HarnessError> {
        let candidates = self.train.iter().enumerate().filter(|(_, t)| t.id != input.id);
        Ok(match self.strategy {
            ShotStrategy::RetrievalEmbedding => {
                let p = self.provider.ok_or(HarnessError::MissingProvider)?;
                let v = p.embed(&input.id, &input.nl)?;
                candidates.map(|(i, _)| (i, cosine(&self.train_vectors[i], &v))).collect()
            }
            _ => candidates.map(|(i, t)| (i, bleu(&t.nl, &input.nl).0)).collect(),
        })
    }

    pub fn select(&self, input: &Instance) -> Result<Vec<&'a Instance>, HarnessError> {
        if self.k == 0 {
            return Ok(Vec::new());
        }
        let available = self.train.iter().filter(|t| t.id != input.id).count();
        if self.k > available {
            return Err(HarnessError::TooFewTrain { k: self.k, available });
        }
        if let ShotStrategy::Random { seed } = self.strategy {
            let pool: Vec<&Instance> = self.train.iter().filter(|t| t.id != input.id).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id_hash(&input.id));
            return Ok(sample(&mut rng, pool.len(), self.k).into_iter().map(|i| pool[i]).collect());
        }
        let mut ranked = self.similarities(input)?;
        ranked.sort_by(|a, b| match b.1.total_cmp(&a.1) {
            Ordering::Equal => self.train[a.0].id.cmp(&self.train[b.0].id),
            o => o,
        });
        ranked.truncate(self.k);
        if self.order == ShotOrder::MostSimilarLast {
            ranked.reverse();
        }
        Ok(ranked.into_iter().map(|(i, _)| &self.train[i]).collect())
    }
}

fn id_hash(id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn select_shots<'a>(
    input: &Instance,
    train: &'a [Instance],
    strategy: ShotStrategy,
    k: usize,
    provider: Option<&'a dyn EmbeddingProvider>,
) -> Result<Vec<&'a Instance>, HarnessError> {
    ShotSelector::new(train, strategy, k, provider)?.select(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::embedding::HashingEmbedder;

    fn train() -> Vec<Instance> {
        [
            ("t1", "castles in Tuscany"),
            ("t2", "all historic castles in Germany"),
            ("t3", "bus stops in Lyon"),
            ("t4", "castle in Deutschland"),
            ("t5", "atms in Berlin"),
        ]
        .iter()
        .map(|(id, nl)| Instance::new(*id, *nl, "out;", Split::Train))
        .collect()
    }

    #[test]
    fn zero_and_too_many() {
        let t = train();
        let input = Instance::new("e", "castle in Deutschland", "out;", Split::Test);
        assert!(select_shots(&input, &t, ShotStrategy::RetrievalBleu, 0, None).unwrap().is_empty());
        assert!(matches!(
            select_shots(&input, &t, ShotStrategy::RetrievalBleu, 6, None),
            Err(HarnessError::TooFewTrain { .. })
        ));
    }

    #[test]
    fn identical_input_is_last() {
        let t = train();
        let input = Instance::new("e", "castle in Deutschland", "out;", Split::Test);
        let shots = select_shots(&input, &t, ShotStrategy::RetrievalBleu, 3, None).unwrap();
        assert_eq!(shots.last().unwrap().id, "t4");
        let first = ShotSelector::new(&t, ShotStrategy::RetrievalBleu, 3, None)
            .unwrap()
            .with_order(ShotOrder::MostSimilarFirst)
            .select(&input)
            .unwrap();
        assert_eq!(first[0].id, "t4");
    }

    #[test]
    fn random_is_seeded() {
        let t = train();
        let input = Instance::new("e", "x", "out;", Split::Test);
        let a = select_shots(&input, &t, ShotStrategy::Random { seed: 7 }, 3, None).unwrap();
        let b = select_shots(&input, &t, ShotStrategy::Random { seed: 7 }, 3, None).unwrap();
        assert_eq!(a, b);
        let ids: std::collections::BTreeSet<_> = a.iter().map(|i| &i.id).collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn embedding_needs_provider() {
        let t = train();
        assert!(matches!(
            ShotSelector::new(&t, ShotStrategy::RetrievalEmbedding, 2, None),
            Err(HarnessError::MissingProvider)
        ));
        let p = HashingEmbedder::default();
        let input = Instance::new("e", "castle in Deutschland", "out;", Split::Test);
        let shots = select_shots(&input, &t, ShotStrategy::RetrievalEmbedding, 2, Some(&p)).unwrap();
        assert_eq!(shots[1].id, "t4");
    }

    #[test]
    fn strategy_names() {
        assert_eq!("random:3".parse::<ShotStrategy>().unwrap(), ShotStrategy::Random { seed: 3 });
        assert_eq!("bleu".parse::<ShotStrategy>().unwrap(), ShotStrategy::RetrievalBleu);
        assert!("random".parse::<ShotStrategy>().is_err());
    }
}
