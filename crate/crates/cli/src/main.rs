//! `cohortloop`: the analysis server plus corpus inspection commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cohortloop::{corpus_summary, parse_corpus, Corpus};
use cohortloop_api::{server, Service, ServiceConfig, SystemClock};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "cohortloop", version, about = "Retrospective EHR cohort analysis and iterative risk modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API (and the web UI when `ui_dir` is set).
    Serve {
        /// TOML config; COHORTLOOP_* environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the summary of a corpus file as JSON.
    Summary { corpus: PathBuf },
    /// Check a corpus file; exits non-zero and lists violations if invalid.
    Validate { corpus: PathBuf },
}

fn read_corpus(path: &Path) -> Result<std::result::Result<Corpus, cohortloop::CorpusError>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_corpus(&bytes))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Serve { config } => serve(config.as_deref()),
        Command::Summary { corpus } => {
            let corpus = read_corpus(&corpus)??;
            println!("{}", serde_json::to_string_pretty(&corpus_summary(&corpus))?);
            Ok(())
        }
        Command::Validate { corpus: path } => match read_corpus(&path)? {
            Ok(c) => {
                println!("{}: {} patients, valid", path.display(), c.len());
                Ok(())
            }
            Err(e) => {
                for v in e.violations() {
                    println!("{v}");
                }
                bail!("{}: {e}", path.display())
            }
        },
    }
}

fn serve(config: Option<&Path>) -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"))).init();
    let config = ServiceConfig::load(config)?;
    let service = Arc::new(Service::new(config, Arc::new(SystemClock))?);
    if service.config().corpus_path.is_some() {
        let r = service.dispatch("POST", "/corpus/load", b"");
        if r.status != 200 {
            bail!("loading the configured corpus failed: {}", r.body);
        }
        tracing::info!(patients = %r.body["summary"]["patient_count"], "corpus loaded");
    }
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(server::serve(service))?;
    Ok(())
}
