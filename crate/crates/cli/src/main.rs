use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use scigraph::pipeline::{self, PipelineConfig};

/// Scientific term extraction, knowledge graph construction and method
/// recommendation, one file-mediated stage per command.
#[derive(Debug, Parser)]
#[command(name = "scigraph", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline config file (flat TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set seed=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,
    /// Directory for artifacts (overrides `work_dir`).
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Seed for every stochastic component (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the supervised CRF tagger on the labeled file.
    TrainTagger,
    /// Tag the corpus abstracts with the trained tagger.
    Tag,
    /// Build the token graph and run one propagation pass.
    Propagate,
    /// Graph-based self-training of the tagger.
    SelfTrain(SelfTrainArgs),
    /// Link tagged spans into entity clusters.
    Link,
    /// Build the co-occurrence knowledge graph.
    BuildKg,
    /// Merge auxiliary relation files into the graph.
    IngestAux(IngestArgs),
    /// Time-based train/dev/test split of the per-paper triples.
    Split(SplitArgs),
    /// Train relation embeddings.
    TrainEmbed(EmbedArgs),
    /// Rank candidate partners for a term.
    Recommend(RecommendArgs),
    /// Link-prediction evaluation on a test split; prints the JSON report.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SelfTrainArgs {
    /// graphinterp or graphfeat.
    #[arg(long)]
    strategy: Option<String>,
    /// ulm or hard.
    #[arg(long)]
    training: Option<String>,
    /// inductive or transductive.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// `resource=path`; replaces `aux_files` when given. Repeatable.
    #[arg(long = "file", value_name = "RESOURCE=PATH")]
    files: Vec<String>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    cutoff_year: Option<i32>,
    #[arg(long)]
    dev_venue: Option<String>,
    /// Held-out entity id. Repeatable; replaces `holdout` when given.
    #[arg(long)]
    holdout: Vec<String>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Graph directory under the work dir (`kg` or `kg_train`).
    #[arg(long)]
    graph: Option<String>,
    /// Train with relation-path features.
    #[arg(long)]
    paths: bool,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    /// Query term (surface form or entity id).
    #[arg(long)]
    term: String,
    /// Task-Task, Task-Method or Method-Method.
    #[arg(long, default_value = "Task-Method")]
    relation: String,
    /// Number of rows (overrides `top`).
    #[arg(long)]
    top: Option<usize>,
    /// Drop partners already linked to the term in the graph.
    #[arg(long)]
    exclude_known: bool,
    #[arg(long)]
    graph: Option<String>,
    /// Output TSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Test triples; defaults to `split/test.tsv` in the work dir.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    graph: Option<String>,
    /// Rank against every candidate instead of the filtered set.
    #[arg(long)]
    raw: bool,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Command flags become config overrides so they pass the same validation.
fn overrides(cli: &Cli) -> Vec<String> {
    let mut out = cli.global.overrides.clone();
    if let Some(w) = &cli.global.work_dir {
        out.push(format!("work_dir={}", quote(&w.to_string_lossy())));
    }
    if let Some(s) = cli.global.seed {
        out.push(format!("seed={s}"));
    }
    let list = |items: &[String]| format!("[{}]", items.iter().map(|s| quote(s)).collect::<Vec<_>>().join(", "));
    match &cli.command {
        Command::SelfTrain(a) => {
            if let Some(s) = &a.strategy {
                out.push(format!("strategy={}", quote(s)));
            }
            if let Some(t) = &a.training {
                out.push(format!("training={}", quote(t)));
            }
            if let Some(m) = &a.mode {
                out.push(format!("mode={}", quote(m)));
            }
            if let Some(r) = a.rounds {
                out.push(format!("rounds={r}"));
            }
        }
        Command::IngestAux(a) if !a.files.is_empty() => out.push(format!("aux_files={}", list(&a.files))),
        Command::Split(a) => {
            if let Some(y) = a.cutoff_year {
                out.push(format!("cutoff_year={y}"));
            }
            if let Some(v) = &a.dev_venue {
                out.push(format!("dev_venue={}", quote(v)));
            }
            if !a.holdout.is_empty() {
                out.push(format!("holdout={}", list(&a.holdout)));
            }
        }
        Command::TrainEmbed(a) => {
            if let Some(g) = &a.graph {
                out.push(format!("embed_graph={}", quote(g)));
            }
            if a.paths {
                out.push("embed_use_paths=true".into());
            }
        }
        Command::Recommend(a) => {
            if let Some(g) = &a.graph {
                out.push(format!("embed_graph={}", quote(g)));
            }
            if let Some(t) = a.top {
                out.push(format!("top={t}"));
            }
        }
        Command::Evaluate(a) => {
            if let Some(g) = &a.graph {
                out.push(format!("embed_graph={}", quote(g)));
            }
            if a.raw {
                out.push("rank_mode=\"raw\"".into());
            }
        }
        _ => {}
    }
    out
}

fn run(cli: &Cli) -> Result<()> {
    let config = PipelineConfig::load(cli.global.config.as_deref(), &overrides(cli))?;
    info!("seed {}", config.seed);
    info!("resolved config:\n{}", config.to_toml());
    match &cli.command {
        Command::TrainTagger => {
            pipeline::train_tagger(&config)?;
        }
        Command::Tag => {
            pipeline::tag(&config)?;
        }
        Command::Propagate => {
            pipeline::propagate(&config)?;
        }
        Command::SelfTrain(_) => {
            let summary = pipeline::self_train(&config)?;
            info!("self-training finished, dev F1 {:?}", summary.dev_f1);
        }
        Command::Link => {
            pipeline::link(&config)?;
        }
        Command::BuildKg => {
            pipeline::build_kg(&config)?;
        }
        Command::IngestAux(_) => {
            pipeline::ingest_aux(&config)?;
        }
        Command::Split(_) => {
            pipeline::split(&config)?;
        }
        Command::TrainEmbed(_) => {
            pipeline::train_embed(&config)?;
        }
        Command::Recommend(a) => {
            let rows = pipeline::recommend(&config, &a.term, &a.relation, a.exclude_known)?;
            match &a.out {
                Some(path) => {
                    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    pipeline::write_recommendation_tsv(&rows, std::io::BufWriter::new(file))?;
                }
                None => pipeline::write_recommendation_tsv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Evaluate(a) => {
            let report = pipeline::evaluate(&config, a.test.as_deref())?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global() {
        error!("thread pool: {e}");
        return ExitCode::FAILURE;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
