use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use textnet::pipeline::{run_all, run_stage, sweep, PipelineConfig, Stage};
use textnet::synth::{generate_corpus, write_jsonl, SynthSpec};
use textnet::Error;

#[derive(Parser)]
#[command(name = "textnet", version, about = "Community extraction on document-similarity networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set graph.tau=0.15`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, normalize and stem the corpus.
    Ingest(Common),
    /// Build the tf-idf matrix.
    Vectorize(Common),
    /// Truncated SVD document embeddings.
    Embed(Common),
    /// Thresholded correlation graph.
    Graph(Common),
    /// Partition and extract communities.
    Extract(Common),
    /// Fuse communities across partitions.
    Merge(Common),
    /// Group correlation, heterophily and NMI reports.
    Evaluate(Common),
    /// All stages in order.
    Run(Common),
    /// One full run per `[sweep]` grid point.
    Sweep(Common),
    /// Write a planted-topic synthetic corpus.
    Synth {
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> textnet::Result<PipelineConfig> {
    if let Some(n) = common.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    PipelineConfig::load(&common.config, &overrides)
}

fn execute(command: Command) -> textnet::Result<()> {
    let stage = |s: Stage, common: &Common| -> textnet::Result<()> {
        let cfg = load(common)?;
        let outcome = run_stage(s, &cfg)?;
        if outcome.ran {
            println!("{s}: done in {} ms", outcome.wall_time_ms);
        } else {
            println!("{s}: up to date");
        }
        Ok(())
    };
    match command {
        Command::Ingest(c) => stage(Stage::Ingest, &c),
        Command::Vectorize(c) => stage(Stage::Vectorize, &c),
        Command::Embed(c) => stage(Stage::Embed, &c),
        Command::Graph(c) => stage(Stage::Graph, &c),
        Command::Extract(c) => stage(Stage::Extract, &c),
        Command::Merge(c) => stage(Stage::Merge, &c),
        Command::Evaluate(c) => stage(Stage::Evaluate, &c),
        Command::Run(c) => {
            let summary = run_all(&load(&c)?)?;
            print!("{summary}");
            Ok(())
        }
        Command::Sweep(c) => {
            for (label, summary) in sweep(&load(&c)?)? {
                println!("[{label}]");
                print!("{summary}");
            }
            Ok(())
        }
        Command::Synth { out, spec, seed } => {
            let mut spec: SynthSpec = match spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config { field: p.display().to_string(), message: e.to_string() })?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let docs = generate_corpus(&spec)?;
            write_jsonl(&out, &docs)?;
            println!("wrote {} documents to {}", docs.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
