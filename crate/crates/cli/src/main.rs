mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "oqlkit", version, about = "Text-to-OverpassQL toolkit")]
pub struct Cli {
    /// TOML file with default values for the flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for report files. Without it, reports go to stdout.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Default)]
pub struct ExecArgs {
    /// Overpass API base URL (falls back to OVERPASS_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Default bounding box as south,west,north,east.
    #[arg(long)]
    pub bbox: Option<String>,
    /// TSV of geocode answers used instead of Nominatim.
    #[arg(long)]
    pub geocodes: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct ShotArgs {
    /// random, random:SEED, bleu or embedding.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// hashing, hashing:DIM, file:PATH or an http(s) URL.
    #[arg(long)]
    pub provider: Option<String>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse a query and print its syntax tree.
    Parse {
        /// Query file; stdin when absent or "-".
        file: Option<PathBuf>,
        /// Print the AST instead of the syntax tree.
        #[arg(long)]
        ast: bool,
    },
    /// Corpus statistics.
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Score one hypothesis against one reference.
    Score {
        hypothesis: String,
        reference: String,
        /// Treat both arguments as file paths.
        #[arg(long)]
        files: bool,
    },
    /// Score a predictions file against a corpus split.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also execute both sides and report EX and EX_soft.
        #[arg(long)]
        execute: bool,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Split an evaluation split into easy, medium and hard thirds.
    Partition {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        criterion: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        provider: Option<String>,
    },
    /// Print the few-shot prompt for one input.
    Prompt {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Corpus instance to build the prompt for.
        #[arg(long, conflicts_with = "nl", required_unless_present = "nl")]
        id: Option<String>,
        /// Free-text input.
        #[arg(long)]
        nl: Option<String>,
        #[command(flatten)]
        shots: ShotArgs,
    },
    /// Few-shot generation for a corpus split.
    Generate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// fixture:PATH or an http(s) completions URL.
        #[arg(long)]
        client: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 512)]
        max_tokens: usize,
        #[command(flatten)]
        shots: ShotArgs,
    },
    /// One round of self-refinement over a predictions file.
    Refine {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        client: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "test")]
        split: String,
        /// off, errors_only or all.
        #[arg(long, default_value = "errors_only")]
        refine_mode: String,
        #[arg(long)]
        with_feedback: bool,
        /// Predictions for training instances shown as refine examples.
        #[arg(long)]
        shot_hypotheses: Option<PathBuf>,
        #[command(flatten)]
        shots: ShotArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run one query against an Overpass endpoint.
    Execute {
        file: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Serve canned Overpass responses over HTTP.
    ServeFixture {
        /// JSONL of {"query", "body", "status"?, "content_type"?}.
        #[arg(long)]
        canned: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Expand macros in canned queries with this bbox.
        #[arg(long)]
        bbox: Option<String>,
        /// Expand macros in canned queries with these geocodes.
        #[arg(long)]
        geocodes: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
