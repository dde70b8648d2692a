//! Writes a synthetic corpus and its ground truth from a JSON risk spec.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use cohortloop::serialize_corpus;
use cohortloop::synth::{generate_corpus, ground_truth_report, RiskSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "synth-gen", about = "Generate a synthetic EHR corpus with a planted risk model")]
struct Args {
    /// Risk spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Corpus output path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth output path: per-patient planted risk plus a summary.
    #[arg(long)]
    truth: PathBuf,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let text = fs::read(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: RiskSpec = serde_json::from_slice(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let (corpus, truth) = generate_corpus(&spec)?;
    let report = ground_truth_report(&truth);

    fs::write(&args.out, serialize_corpus(&corpus)).with_context(|| format!("writing {}", args.out.display()))?;
    let doc = json!({ "report": report, "ground_truth": truth });
    fs::write(&args.truth, serde_json::to_vec_pretty(&doc)?).with_context(|| format!("writing {}", args.truth.display()))?;

    eprintln!(
        "{} patients, {} with the sequela (prevalence {:.3}), planted-model AUC {}",
        report.n_patients,
        report.positives,
        report.prevalence,
        report.true_auc.map_or("undefined".to_string(), |a| format!("{a:.3}"))
    );
    Ok(())
}
