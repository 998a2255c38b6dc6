use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use prodsearch::config::Settings;
use prodsearch::corpus::Split;
use prodsearch::model::Variant;
use prodsearch::pipeline;
use prodsearch::synth::Profile;

#[derive(Parser)]
#[command(name = "prodsearch", version, about = "Personalized product search")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation (1 = fully sequential).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra settings as `key=value`, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw reviews and metadata into a split corpus directory.
    Preprocess {
        #[arg(long)]
        reviews: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic raw corpus with planted preferences.
    Synth {
        #[arg(long)]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        users: Option<usize>,
    },
    /// Train product and query vectors.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "ALSTP")]
        variant: Variant,
    },
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Print the top products for one user and query.
    Search {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Write attention weights of every held-out instance.
    AttnDump {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    BaselineQl {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    BaselineUql {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Paired t-test between two evaluation directories.
    Significance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "ndcg")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn settings(g: &Global) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &g.config {
        s.apply_file(path).with_context(|| format!("reading config {}", path.display()))?;
    }
    for kv in &g.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        s.set(k, v)?;
    }
    if let Some(seed) = g.seed {
        s.set("seed", &seed.to_string())?;
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let s = settings(&cli.global)?;
    match cli.command {
        Command::Preprocess { reviews, meta, out } => {
            let summary = pipeline::preprocess(&reviews, &meta, &out, &s)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Synth { profile, out, users } => {
            let truth = pipeline::synth(profile, &out, s.seed, users)?;
            println!("wrote {} users to {}", truth.users.len(), out.display());
        }
        Command::Embed { corpus, out } => {
            let table = pipeline::embed(&corpus, &out, &s)?;
            println!("embeddings {} (k = {})", table.checksum(), table.k());
        }
        Command::Train { corpus, embeddings, out, variant } => {
            let report = pipeline::train(&corpus, &embeddings, &out, variant, &s)?;
            let best = report.best_epoch.and_then(|e| report.epochs[e].validation);
            match (report.best_epoch, best) {
                (Some(e), Some(m)) => println!("best epoch {e}: validation ndcg {:.4}", m.ndcg),
                _ => println!("trained {} epochs", report.epochs.len()),
            }
        }
        Command::Eval { corpus, embeddings, model, out, split } => {
            let r = pipeline::evaluate(&corpus, &embeddings, &model, &out, split, &s)?;
            println!("{}", serde_json::to_string_pretty(&r.metrics)?);
        }
        Command::Search { corpus, embeddings, model, user, query, top } => {
            for (i, hit) in pipeline::search(&corpus, &embeddings, &model, &user, &query, top)?.iter().enumerate() {
                println!("{:>3}  {:<16} {:.6}", i + 1, hit.product, hit.score);
            }
        }
        Command::AttnDump { corpus, embeddings, model, out, split } => {
            let records = pipeline::attention(&corpus, &embeddings, &model, &out, split, &s)?;
            println!("wrote {} records", records.len());
        }
        Command::BaselineQl { corpus, out, split } => {
            let r = pipeline::baseline(&corpus, &out, split, None, &s)?;
            println!("{}", serde_json::to_string_pretty(&r.metrics)?);
        }
        Command::BaselineUql { corpus, out, split } => {
            let r = pipeline::baseline(&corpus, &out, split, Some(s.lambda_mix), &s)?;
            println!("{}", serde_json::to_string_pretty(&r.metrics)?);
        }
        Command::Significance { a, b, metric, out } => {
            let r = pipeline::significance(&a, &b, &metric, &out, &s)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
