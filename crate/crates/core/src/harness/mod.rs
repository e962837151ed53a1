//! Few-shot prompting, generation, self-refinement and evaluation reports.

pub mod client;
pub mod eval;
pub mod prompt;
pub mod refine;
pub mod shots;

use thiserror::Error;

use crate::embedding::EmbedError;

pub use client::{FixtureClient, GenerationClient, HttpClient};
pub use eval::{run_eval, EvalAggregates, EvalReport, EvalRow};
pub use prompt::{build_prompt, build_refine_prompt, strip_code_fence, RefineShot, STOP_SEQUENCE};
pub use refine::{RefineMode, RefineOptions, RefinePolicy, RefineResult, Refiner};
pub use shots::{select_shots, ShotOrder, ShotSelector, ShotStrategy, DEFAULT_SHOTS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("embedding retrieval needs an embedding provider")]
    MissingProvider,
    #[error("asked for {k} shots but only {available} training instances are available")]
    TooFewTrain { k: usize, available: usize },
    #[error("{0}")]
    Embedding(#[from] EmbedError),
    #[error("generation failed: {0}")]
    Generation(String),
}
