use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use oqlkit::corpus::{load_predictions, predictions_to_jsonl, stats, write_atomic, Corpus, Instance, Split};
use oqlkit::difficulty::{partition, DifficultyCriterion, TrainContext};
use oqlkit::embedding::{EmbeddingProvider, FileEmbeddings, HashingEmbedder, HttpEmbeddings};
use oqlkit::executor::fixture::{CannedMap, FixtureServer};
use oqlkit::executor::{
    feedback_from_outcome, parse_bbox, ExecutionConfig, Executor, FixtureResolver, GeocodeResolver, NominatimResolver,
    SAMPLE_LIMIT,
};
use oqlkit::harness::{
    build_prompt, strip_code_fence, FixtureClient, GenerationClient, HttpClient, RefineMode, RefineOptions,
    RefinePolicy, Refiner, ShotSelector, ShotStrategy, DEFAULT_SHOTS, STOP_SEQUENCE,
};
use oqlkit::metrics::{em, oqs};
use oqlkit::parser::parse;
use oqlkit::tree::to_syntax_tree;

use crate::config::{pick, require, FileConfig, DEFAULT_NOMINATIM};
use crate::{Cli, Command, ExecArgs, ShotArgs};

const FAILURE: u8 = 1;

struct Ctx {
    file: FileConfig,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    /// Writes `name` under the output directory, or prints it when there is none.
    fn emit(&self, name: &str, content: &str) -> Result<()> {
        match &self.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                write_atomic(&path, content.as_bytes()).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(content.as_bytes())?;
                Ok(out.flush()?)
            }
        }
    }

    fn corpus(&self, flag: Option<PathBuf>) -> Result<Corpus> {
        let path = require(flag, &self.file.corpus, "corpus")?;
        Corpus::load(&path).context("loading corpus")
    }

    fn predictions(&self, flag: Option<PathBuf>) -> Result<BTreeMap<String, String>> {
        let path = require(flag, &self.file.predictions, "predictions")?;
        load_predictions(&path).context("loading predictions")
    }

    fn executor(&self, args: &ExecArgs) -> Result<Executor> {
        let mut cfg = ExecutionConfig::new(self.file.endpoint(args.endpoint.as_deref()));
        if let Some(b) = pick(args.bbox.clone(), &self.file.bbox) {
            cfg.default_bbox = parse_bbox(&b)?;
        }
        if let Some(n) = self.file.max_inflight {
            cfg.max_inflight = n;
        }
        if let Some(t) = self.file.timeout {
            cfg.request_timeout = t;
        }
        cfg.cache_dir = self.file.cache_dir.clone();
        let resolver: Box<dyn GeocodeResolver> = match pick(args.geocodes.clone(), &self.file.geocodes) {
            Some(p) => Box::new(FixtureResolver::load(&p)?),
            None => Box::new(NominatimResolver::new(
                self.file.nominatim.clone().unwrap_or_else(|| DEFAULT_NOMINATIM.to_string()),
            )),
        };
        Ok(Executor::new(cfg, resolver)?)
    }

    fn provider(&self, flag: Option<String>) -> Result<Box<dyn EmbeddingProvider>> {
        let spec = pick(flag, &self.file.provider).unwrap_or_else(|| "hashing".into());
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(Box::new(HttpEmbeddings {
                url: spec,
                dimension: self.file.embedding_dimension.unwrap_or(768),
                timeout: Duration::from_secs(60),
            }));
        }
        Ok(match spec.split_once(':') {
            None if spec == "hashing" => Box::new(HashingEmbedder::default()),
            Some(("hashing", d)) => {
                let dimension = d.parse().ok().filter(|&d| d > 0).ok_or_else(|| anyhow!("bad dimension {d:?}"))?;
                Box::new(HashingEmbedder { dimension })
            }
            Some(("file", p)) => Box::new(FileEmbeddings::load(Path::new(p))?),
            _ => bail!("unknown embedding provider {spec:?}"),
        })
    }

    fn client(&self, flag: Option<String>, model: Option<String>) -> Result<Box<dyn GenerationClient>> {
        let spec = require(flag, &self.file.client, "client")?;
        if let Some(p) = spec.strip_prefix("fixture:") {
            return Ok(Box::new(FixtureClient::load(Path::new(p))?));
        }
        if spec.starts_with("http://") || spec.starts_with("https://") {
            let model = require(model, &self.file.model, "model")?;
            return Ok(Box::new(HttpClient::new(spec, model)));
        }
        bail!("unknown client {spec:?}; expected fixture:PATH or an http(s) URL")
    }

    fn strategy(&self, shots: &ShotArgs) -> Result<ShotStrategy> {
        let s = pick(shots.strategy.clone(), &self.file.strategy).unwrap_or_else(|| "bleu".into());
        if s == "random" {
            let seed = pick(shots.seed, &self.file.seed).unwrap_or(0);
            return Ok(ShotStrategy::Random { seed });
        }
        Ok(s.parse()?)
    }
}

fn split(name: &str) -> Result<Split> {
    Split::from_name(name).ok_or_else(|| anyhow!("unknown split {name:?}"))
}

fn owned_split(corpus: &Corpus, s: Split) -> Vec<Instance> {
    corpus.split(s).into_iter().cloned().collect()
}

fn read_source(file: Option<&Path>) -> Result<(String, String)> {
    match file {
        Some(p) if p != Path::new("-") => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((p.display().to_string(), text))
        }
        _ => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            Ok(("<stdin>".into(), text))
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(jobs) = pick(cli.jobs, &file.jobs) {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let ctx = Ctx { out_dir: pick(cli.out_dir, &file.out_dir), file };
    match cli.command {
        Command::Parse { file, ast } => cmd_parse(file.as_deref(), ast),
        Command::Stats { corpus, json } => cmd_stats(&ctx, corpus, json),
        Command::Score { hypothesis, reference, files } => cmd_score(&hypothesis, &reference, files),
        Command::Evaluate { corpus, predictions, split, execute, exec } => {
            cmd_evaluate(&ctx, corpus, predictions, &split, execute.then_some(exec))
        }
        Command::Partition { corpus, criterion, split, provider } => {
            cmd_partition(&ctx, corpus, &criterion, &split, provider)
        }
        Command::Prompt { corpus, id, nl, shots } => cmd_prompt(&ctx, corpus, id, nl, &shots),
        Command::Generate { corpus, client, model, split, max_tokens, shots } => {
            cmd_generate(&ctx, corpus, client, model, &split, max_tokens, &shots)
        }
        Command::Refine {
            corpus,
            predictions,
            client,
            model,
            split,
            refine_mode,
            with_feedback,
            shot_hypotheses,
            shots,
            exec,
        } => {
            let policy = RefinePolicy { mode: refine_mode.parse()?, with_feedback };
            let args = RefineArgs { corpus, predictions, client, model, split, shot_hypotheses, shots, exec };
            cmd_refine(&ctx, policy, args)
        }
        Command::Execute { file, exec } => cmd_execute(&ctx, file.as_deref(), &exec),
        Command::ServeFixture { canned, bind, bbox, geocodes } => cmd_serve(&canned, &bind, bbox, geocodes),
    }
}

fn cmd_parse(file: Option<&Path>, ast: bool) -> Result<ExitCode> {
    let (name, text) = read_source(file)?;
    match parse(&text) {
        Ok(q) => {
            if ast {
                println!("{q:#?}");
            } else {
                print!("{}", to_syntax_tree(&q).pretty());
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{name}:{}:{}: {}", e.line, e.column, e.message);
            Ok(ExitCode::from(FAILURE))
        }
    }
}

fn cmd_stats(ctx: &Ctx, corpus: Option<PathBuf>, json: bool) -> Result<ExitCode> {
    let report = stats(&ctx.corpus(corpus)?);
    for f in &report.parse_failures {
        eprintln!("parse failure {} {}:{}: {}", f.id, f.line, f.column, f.message);
    }
    let json_text = serde_json::to_string_pretty(&report)? + "\n";
    if ctx.out_dir.is_some() {
        ctx.emit("stats.txt", &report.render())?;
        ctx.emit("stats.json", &json_text)?;
    } else if json {
        ctx.emit("stats.json", &json_text)?;
    } else {
        ctx.emit("stats.txt", &report.render())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_score(hyp: &str, reference: &str, files: bool) -> Result<ExitCode> {
    let (hyp, reference) = if files {
        (read_source(Some(Path::new(hyp)))?.1, read_source(Some(Path::new(reference)))?.1)
    } else {
        (hyp.to_string(), reference.to_string())
    };
    let b = match oqs(&hyp, &reference) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("reference does not parse: {}:{}: {}", e.line, e.column, e.message);
            return Ok(ExitCode::from(FAILURE));
        }
    };
    if let Err(e) = parse(&hyp) {
        eprintln!("warning: hypothesis does not parse ({}:{}: {}); kvs and trees are 0", e.line, e.column, e.message);
    }
    println!("chrf {:.1}", b.chrf.percent());
    println!("kvs {:.1}", b.kvs.percent());
    println!("trees {:.1}", b.trees.percent());
    println!("oqs {:.1}", b.oqs.percent());
    println!("em {}", u8::from(em(&hyp, &reference)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(
    ctx: &Ctx,
    corpus: Option<PathBuf>,
    predictions: Option<PathBuf>,
    split_name: &str,
    exec: Option<ExecArgs>,
) -> Result<ExitCode> {
    let corpus = ctx.corpus(corpus)?;
    let eval = owned_split(&corpus, split(split_name)?);
    let predictions = ctx.predictions(predictions)?;
    let executor = exec.map(|a| ctx.executor(&a)).transpose()?;
    let report = oqlkit::harness::run_eval(&eval, &predictions, executor.as_ref());
    for r in report.rows.iter().filter(|r| r.missing_prediction) {
        eprintln!("missing prediction for {}", r.id);
    }
    let table = report.to_table();
    if ctx.out_dir.is_some() {
        ctx.emit("eval_rows.tsv", &report.to_tsv())?;
        ctx.emit("eval_summary.txt", &table)?;
        ctx.emit("eval_summary.json", &(serde_json::to_string_pretty(&report.aggregates)? + "\n"))?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_partition(
    ctx: &Ctx,
    corpus: Option<PathBuf>,
    criterion: &str,
    split_name: &str,
    provider: Option<String>,
) -> Result<ExitCode> {
    let criterion: DifficultyCriterion = criterion.parse()?;
    let corpus = ctx.corpus(corpus)?;
    let eval = owned_split(&corpus, split(split_name)?);
    let train = owned_split(&corpus, Split::Train);
    let provider = if criterion.is_similarity() { Some(ctx.provider(provider)?) } else { None };
    let train_ctx = TrainContext::new(&train, provider.as_deref())?;
    let p = partition(&eval, criterion, &train_ctx)?;
    ctx.emit(&format!("partition_{criterion}.tsv"), &p.to_tsv())?;
    eprintln!("easy {} medium {} hard {}", p.easy.len(), p.medium.len(), p.hard.len());
    Ok(ExitCode::SUCCESS)
}

fn selector<'a>(
    ctx: &Ctx,
    train: &'a [Instance],
    shots: &ShotArgs,
    provider: Option<&'a dyn EmbeddingProvider>,
    default_k: usize,
) -> Result<ShotSelector<'a>> {
    let k = pick(shots.k, &ctx.file.k).unwrap_or(default_k);
    Ok(ShotSelector::new(train, ctx.strategy(shots)?, k, provider)?)
}

fn needs_provider(ctx: &Ctx, shots: &ShotArgs) -> Result<Option<Box<dyn EmbeddingProvider>>> {
    match ctx.strategy(shots)? {
        ShotStrategy::RetrievalEmbedding => Ok(Some(ctx.provider(shots.provider.clone())?)),
        _ => Ok(None),
    }
}

fn cmd_prompt(
    ctx: &Ctx,
    corpus: Option<PathBuf>,
    id: Option<String>,
    nl: Option<String>,
    shots: &ShotArgs,
) -> Result<ExitCode> {
    let corpus = ctx.corpus(corpus)?;
    let input = match (id, nl) {
        (Some(id), _) => corpus.get(&id).cloned().ok_or_else(|| anyhow!("no instance with id {id:?}"))?,
        (None, Some(nl)) => Instance::new("input", nl, "", Split::Test),
        (None, None) => bail!("give --id or --nl"),
    };
    let train = owned_split(&corpus, Split::Train);
    let provider = needs_provider(ctx, shots)?;
    let sel = selector(ctx, &train, shots, provider.as_deref(), DEFAULT_SHOTS)?;
    let chosen = sel.select(&input)?;
    ctx.emit("prompt.txt", &build_prompt(&chosen, &input.nl))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(
    ctx: &Ctx,
    corpus: Option<PathBuf>,
    client: Option<String>,
    model: Option<String>,
    split_name: &str,
    max_tokens: usize,
    shots: &ShotArgs,
) -> Result<ExitCode> {
    let corpus = ctx.corpus(corpus)?;
    let eval = owned_split(&corpus, split(split_name)?);
    let train = owned_split(&corpus, Split::Train);
    let client = ctx.client(client, model)?;
    let provider = needs_provider(ctx, shots)?;
    let sel = selector(ctx, &train, shots, provider.as_deref(), DEFAULT_SHOTS)?;
    let results: Vec<(String, Result<String>)> = eval
        .par_iter()
        .map(|inst| {
            let out = sel.select(inst).map_err(anyhow::Error::from).and_then(|chosen| {
                let prompt = build_prompt(&chosen, &inst.nl);
                Ok(strip_code_fence(&client.generate(&prompt, &[STOP_SEQUENCE], max_tokens)?))
            });
            (inst.id.clone(), out)
        })
        .collect();
    let mut predictions = BTreeMap::new();
    let mut failed = 0;
    for (id, r) in results {
        match r {
            Ok(q) => {
                predictions.insert(id, q);
            }
            Err(e) => {
                failed += 1;
                eprintln!("generation failed for {id}: {e:#}");
            }
        }
    }
    ctx.emit("predictions.jsonl", &predictions_to_jsonl(&predictions))?;
    eprintln!("generated {} of {}", predictions.len(), eval.len());
    Ok(if failed > 0 { ExitCode::from(FAILURE) } else { ExitCode::SUCCESS })
}

struct RefineArgs {
    corpus: Option<PathBuf>,
    predictions: Option<PathBuf>,
    client: Option<String>,
    model: Option<String>,
    split: String,
    shot_hypotheses: Option<PathBuf>,
    shots: ShotArgs,
    exec: ExecArgs,
}

fn cmd_refine(ctx: &Ctx, policy: RefinePolicy, args: RefineArgs) -> Result<ExitCode> {
    let corpus = ctx.corpus(args.corpus)?;
    let eval = owned_split(&corpus, split(&args.split)?);
    let baseline = ctx.predictions(args.predictions)?;
    let client: Box<dyn GenerationClient> = match policy.mode {
        RefineMode::Off => Box::new(FixtureClient::new()),
        _ => ctx.client(args.client, args.model)?,
    };
    let executes = policy.mode == RefineMode::ErrorsOnly || (policy.mode == RefineMode::All && policy.with_feedback);
    let executor = if executes { Some(ctx.executor(&args.exec)?) } else { None };
    let train = owned_split(&corpus, Split::Train);
    let provider = needs_provider(ctx, &args.shots)?;
    let sel = selector(ctx, &train, &args.shots, provider.as_deref(), DEFAULT_SHOTS)?;
    let hyps = match args.shot_hypotheses {
        Some(p) => load_predictions(&p).with_context(|| format!("loading {}", p.display()))?,
        None => BTreeMap::new(),
    };
    let refiner = Refiner {
        policy,
        client: client.as_ref(),
        executor: executor.as_ref(),
        shots: (sel.k() > 0).then_some(&sel),
        shot_hypotheses: &hyps,
        options: RefineOptions::default(),
    };
    let result = refiner.run(&eval, &baseline)?;
    for r in result.failures() {
        eprintln!("kept baseline for {}: {}", r.id, r.failure.as_deref().unwrap_or(""));
    }
    let records: String = result
        .records
        .iter()
        .map(|r| serde_json::to_string(r).map(|l| l + "\n"))
        .collect::<Result<_, _>>()?;
    ctx.emit("refined.jsonl", &predictions_to_jsonl(&result.predictions))?;
    if ctx.out_dir.is_some() {
        ctx.emit("refine_records.jsonl", &records)?;
    }
    eprintln!("refined {} of {} ({policy:?})", result.refined_count(), eval.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_execute(ctx: &Ctx, file: Option<&Path>, args: &ExecArgs) -> Result<ExitCode> {
    let (_, text) = read_source(file)?;
    let executor = ctx.executor(args)?;
    let outcome = executor.execute(&text);
    println!("status {}", outcome.status);
    println!("elements {}", outcome.returned_count);
    println!("elapsed {:.3}s", outcome.elapsed);
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", feedback_from_outcome(&outcome, SAMPLE_LIMIT));
    Ok(if outcome.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(FAILURE) })
}

fn cmd_serve(canned: &Path, bind: &str, bbox: Option<String>, geocodes: Option<PathBuf>) -> Result<ExitCode> {
    let mut map = CannedMap::load(canned).with_context(|| format!("loading {}", canned.display()))?;
    if bbox.is_some() || geocodes.is_some() {
        let bbox = match bbox {
            Some(b) => parse_bbox(&b)?,
            None => ExecutionConfig::new("").default_bbox,
        };
        let resolver = match geocodes {
            Some(p) => FixtureResolver::load(&p)?,
            None => FixtureResolver::new(),
        };
        map = map.expand_keys(bbox, &resolver)?;
    }
    let count = map.len();
    let server = FixtureServer::bind(bind, map).with_context(|| format!("binding {bind}"))?;
    println!("serving {count} canned responses on {}", server.url());
    std::io::stdout().flush()?;
    server.join();
    Ok(ExitCode::SUCCESS)
}
