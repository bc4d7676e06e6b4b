//! `qefuse`: candidate fusion, reranking baselines, evaluation and
//! benchmarks over JSONL candidate pools.
//!
//! Exit codes: 0 on success, 1 for usage, I/O and input errors, 2 when the
//! scorer fails.

mod records;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qefuse::bench::{fit_scaling, pools_by_size, run_bench, Method};
use qefuse::fusion::{fuse_corpus, FusionConfig, DEFAULT_BEAM_SIZE};
use qefuse::metrics::evaluate;
use qefuse::rerank::{mbr, qe_rerank, BleuUtility, ChrfUtility, Utility};
use qefuse::scoring::{HttpScorer, HttpScorerConfig, LexicalQe, OracleScorer, Scorer, SCORER_URL_ENV};
use qefuse::synth::scaling_corpus;
use qefuse::CandidatePool;
use serde_json::json;

use records::{create_output, read_hypotheses, read_pools, require_references, write_jsonl, Numbered, OutputRecord};

#[derive(Parser)]
#[command(
    name = "qefuse",
    version,
    about = "Fuse translation candidates under a quality scorer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse each candidate pool into a single output.
    Fuse(MethodArgs),
    /// Pick the candidate with the best scorer value.
    Rerank(MethodArgs),
    /// Pick the candidate with the best expected utility against the rest.
    Mbr(MbrArgs),
    /// Score outputs against references and summarize the pools.
    Eval(EvalArgs),
    /// Serve a lexical or oracle scorer over HTTP.
    MockScorer(MockArgs),
    /// Count scorer items and utility calls across pool sizes.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Lexical,
    Oracle,
    Http,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LocalScorer {
    Lexical,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UtilityKind {
    Bleu,
    Chrf,
}

impl UtilityKind {
    fn build(self) -> Box<dyn Utility> {
        match self {
            UtilityKind::Bleu => Box::new(BleuUtility::default()),
            UtilityKind::Chrf => Box::new(ChrfUtility),
        }
    }
}

#[derive(Args)]
struct ScorerArgs {
    #[arg(long, value_enum, default_value = "lexical")]
    scorer: ScorerKind,
    /// Base URL of the scoring service for `--scorer http`.
    #[arg(long, env = SCORER_URL_ENV)]
    scorer_url: Option<String>,
    /// Largest number of pairs per HTTP request.
    #[arg(long, default_value_t = 400)]
    batch_size: usize,
}

#[derive(Args)]
struct IoArgs {
    /// Input pools (JSONL).
    #[arg(short, long)]
    input: PathBuf,
    /// Output records (JSONL); stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Keep only the first N candidates of each pool.
    #[arg(long)]
    pool_size: Option<usize>,
}

#[derive(Args)]
struct MethodArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    beam: usize,
    /// Score repeated hypotheses again instead of caching them.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct MbrArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, value_enum)]
    utility: UtilityKind,
}

#[derive(Args)]
struct EvalArgs {
    /// Output records from fuse, rerank or mbr.
    #[arg(long)]
    hyps: PathBuf,
    /// The pools the outputs were produced from, with references.
    #[arg(short, long)]
    input: PathBuf,
    /// Report path (JSON); stdout if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Utility for semantic diversity.
    #[arg(long, value_enum, default_value = "chrf")]
    utility: UtilityKind,
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, value_enum, default_value = "lexical")]
    scorer: LocalScorer,
    /// Pools with references (JSONL), required by the oracle scorer.
    #[arg(long)]
    references: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Pools to truncate to each size; synthetic pools if omitted.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "qe_rerank,mbr,fuse")]
    methods: Vec<String>,
    #[arg(long, value_enum, default_value = "chrf")]
    utility: UtilityKind,
    /// Seed for synthetic pools.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of synthetic sentences.
    #[arg(long, default_value_t = 10)]
    sentences: usize,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    beam: usize,
    #[arg(long)]
    no_cache: bool,
    /// CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command, carrying its exit code.
enum Failure {
    Input(anyhow::Error),
    Scorer(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Scorer(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "{e:#}"),
            Failure::Scorer(e) => write!(f, "{e}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<qefuse::Error> for Failure {
    fn from(e: qefuse::Error) -> Self {
        match e {
            qefuse::Error::Contract(_) => Failure::Input(e.into()),
            qefuse::Error::SentenceScore { .. } | qefuse::Error::Score(_) => Failure::Scorer(e.into()),
        }
    }
}

/// Attributes a single-sentence failure to `id`.
fn for_sentence(id: &str, e: qefuse::Error) -> Failure {
    match e {
        qefuse::Error::Score(source) => Failure::from(qefuse::Error::SentenceScore {
            id: id.to_owned(),
            source,
        }),
        other => other.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn load_pools(io: &IoArgs) -> anyhow::Result<Vec<Numbered<CandidatePool>>> {
    let mut pools = read_pools(&io.input)?;
    if let Some(n) = io.pool_size {
        if n == 0 {
            anyhow::bail!("--pool-size must be at least 1");
        }
        for p in &mut pools {
            p.record = p.record.truncated(n);
        }
    }
    Ok(pools)
}

fn build_scorer(args: &ScorerArgs, input: &Path, pools: &[Numbered<CandidatePool>]) -> anyhow::Result<Box<dyn Scorer>> {
    Ok(match args.scorer {
        ScorerKind::Lexical => Box::new(LexicalQe),
        ScorerKind::Oracle => {
            require_references(input, pools, "required by --scorer oracle")?;
            let pools: Vec<CandidatePool> = pools.iter().map(|p| p.record.clone()).collect();
            Box::new(OracleScorer::from_pools(&pools)?)
        }
        ScorerKind::Http => {
            let url = args
                .scorer_url
                .clone()
                .ok_or_else(|| anyhow!("--scorer http needs --scorer-url or {SCORER_URL_ENV}"))?;
            let config = HttpScorerConfig::new(url).max_batch(args.batch_size);
            Box::new(HttpScorer::new(config).map_err(|e| anyhow!("{e}"))?)
        }
    })
}

fn cmd_fuse(args: &MethodArgs) -> CmdResult {
    let pools = load_pools(&args.io)?;
    let scorer = build_scorer(&args.scorer, &args.io.input, &pools)?;
    let mut out = create_output(args.io.output.as_deref())?;
    let config = FusionConfig::default()
        .with_beam_size(args.beam)
        .with_cache(!args.no_cache);
    let corpus: Vec<CandidatePool> = pools.into_iter().map(|p| p.record).collect();
    let results = fuse_corpus(&corpus, scorer.as_ref(), &config)?;
    let records: Vec<OutputRecord> = corpus
        .iter()
        .zip(results)
        .map(|(pool, r)| OutputRecord {
            id: pool.id.clone(),
            method: "fuse".into(),
            output: r.output,
            score: r.score,
            base_index: r.base_index,
            stats: json!(r.stats),
        })
        .collect();
    write_jsonl(&mut out, &records)?;
    Ok(())
}

fn cmd_rerank(args: &MethodArgs) -> CmdResult {
    let pools = load_pools(&args.io)?;
    let scorer = build_scorer(&args.scorer, &args.io.input, &pools)?;
    let mut out = create_output(args.io.output.as_deref())?;
    let mut records = Vec::with_capacity(pools.len());
    for Numbered { record: pool, .. } in &pools {
        let (idx, score) = qe_rerank(pool, scorer.as_ref()).map_err(|e| for_sentence(&pool.id, e))?;
        records.push(OutputRecord {
            id: pool.id.clone(),
            method: "qe_rerank".into(),
            output: pool.candidates[idx].clone(),
            score,
            base_index: idx,
            stats: json!({ "scored_items": pool.len() }),
        });
    }
    write_jsonl(&mut out, &records)?;
    Ok(())
}

fn cmd_mbr(args: &MbrArgs) -> CmdResult {
    let pools = load_pools(&args.io)?;
    let utility = args.utility.build();
    let mut out = create_output(args.io.output.as_deref())?;
    let mut records = Vec::with_capacity(pools.len());
    for Numbered { record: pool, .. } in &pools {
        let (idx, score) = mbr(pool, utility.as_ref())?;
        let n = pool.len();
        records.push(OutputRecord {
            id: pool.id.clone(),
            method: "mbr".into(),
            output: pool.candidates[idx].clone(),
            score,
            base_index: idx,
            stats: json!({ "utility_calls": n * n.saturating_sub(1) }),
        });
    }
    write_jsonl(&mut out, &records)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let pools = read_pools(&args.input)?;
    require_references(&args.input, &pools, "required for evaluation")?;
    let hyps = read_hypotheses(&args.hyps)?;
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(hyps.len());
    for h in &hyps {
        if by_id.insert(&h.record.id, &h.record.output).is_some() {
            return Err(anyhow!("{}:{}: duplicate id `{}`", args.hyps.display(), h.line, h.record.id).into());
        }
    }
    let mut outputs = Vec::with_capacity(pools.len());
    for p in &pools {
        let hyp = by_id
            .get(p.record.id.as_str())
            .ok_or_else(|| anyhow!("{}: no output for id `{}`", args.hyps.display(), p.record.id))?;
        outputs.push(*hyp);
    }
    if hyps.len() != pools.len() {
        return Err(anyhow!(
            "{} has {} outputs for {} pools",
            args.hyps.display(),
            hyps.len(),
            pools.len()
        )
        .into());
    }
    let corpus: Vec<CandidatePool> = pools.into_iter().map(|p| p.record).collect();
    let utility = args.utility.build();
    let report = evaluate(&outputs, &corpus, utility.as_ref())?;
    let mut out = create_output(args.report.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).context("writing report")?;
    out.write_all(b"\n").context("writing report")?;
    out.flush().context("writing report")?;
    Ok(())
}

fn cmd_mock_scorer(args: &MockArgs) -> CmdResult {
    let scorer: Arc<dyn Scorer> = match args.scorer {
        LocalScorer::Lexical => Arc::new(LexicalQe),
        LocalScorer::Oracle => {
            let path = args
                .references
                .as_deref()
                .ok_or_else(|| anyhow!("--scorer oracle needs --references"))?;
            let pools = read_pools(path)?;
            require_references(path, &pools, "required by --scorer oracle")?;
            let pools: Vec<CandidatePool> = pools.into_iter().map(|p| p.record).collect();
            Arc::new(OracleScorer::from_pools(&pools)?)
        }
    };
    let addr = SocketAddr::new(args.host, args.port);
    qefuse_server::serve(addr, scorer).with_context(|| format!("serving on {addr}"))?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> CmdResult {
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    if args.sizes.is_empty() {
        return Err(anyhow!("--sizes is empty").into());
    }
    let (corpus, input) = match &args.input {
        Some(path) => {
            let pools = read_pools(path)?;
            let scorer = build_scorer(&args.scorer, path, &pools)?;
            (pools.into_iter().map(|p| p.record).collect::<Vec<_>>(), Some(scorer))
        }
        None => {
            let max = args.sizes.iter().copied().max().unwrap_or(1);
            (scaling_corpus(args.seed, args.sentences, max, 3), None)
        }
    };
    let scorer = match input {
        Some(s) => s,
        None => {
            let numbered: Vec<Numbered<CandidatePool>> = corpus
                .iter()
                .enumerate()
                .map(|(i, p)| Numbered {
                    line: i + 1,
                    record: p.clone(),
                })
                .collect();
            build_scorer(&args.scorer, Path::new("<synthetic>"), &numbered)?
        }
    };
    let by_size = pools_by_size(&corpus, &args.sizes)?;
    let utility = args.utility.build();
    let config = FusionConfig::default()
        .with_beam_size(args.beam)
        .with_cache(!args.no_cache);
    let records = run_bench(&by_size, &methods, scorer.as_ref(), utility.as_ref(), &config)?;

    let out = create_output(args.out.as_deref())?;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["method", "N", "wall_time_s", "scored_items", "utility_calls"])
        .context("writing CSV")?;
    for r in &records {
        csv.write_record([
            r.method.name().to_owned(),
            r.pool_size.to_string(),
            format!("{:.6}", r.wall_time_s),
            r.scored_items.to_string(),
            r.utility_calls.to_string(),
        ])
        .context("writing CSV")?;
    }
    csv.flush().context("writing CSV")?;

    if args.sizes.len() >= 3 {
        for &m in &methods {
            let rows: Vec<_> = records.iter().filter(|r| r.method == m).cloned().collect();
            let fit = fit_scaling(&rows)?;
            eprintln!(
                "{m}: cost ~ {:.3} * N + {:.3} (R^2 = {:.4})",
                fit.slope, fit.intercept, fit.r_squared
            );
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Fuse(a) => cmd_fuse(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::Mbr(a) => cmd_mbr(a),
        Command::Eval(a) => cmd_eval(a),
        Command::MockScorer(a) => cmd_mock_scorer(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
