use std::path::PathBuf;

use anyhow::{bail, Result};
use esr_core::bench::{dataset_label, load_registry, run_eval, save_registry, EvalOptions};
use serde_json::json;

use crate::common::{usage, Globals, ModelSource};

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    source: ModelSource,
    /// Dataset directory; its name labels the registry keys.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Expected scale; rejected if the model disagrees.
    #[arg(long)]
    scale: Option<usize>,
    /// Border cropped before scoring; defaults to the scale.
    #[arg(long)]
    border: Option<usize>,
    /// Round the output to 8 bits before scoring.
    #[arg(long)]
    round: bool,
}

pub fn run(args: Args, g: &Globals) -> Result<serde_json::Value> {
    let bank = args.source.load(g.seed)?;
    let spec = bank.spec().clone();
    if let Some(s) = args.scale.filter(|&s| s != spec.scale) {
        bail!(usage(format!("--scale {s} does not match {spec}")));
    }
    let opts = EvalOptions {
        border: args.border,
        round_output: args.round,
    };
    let result = run_eval(&bank, &args.data, opts)?;
    let label = dataset_label(&args.data);
    g.progress(format!(
        "{spec} on {label}: {:.3} dB / {:.4} over {} images",
        result.psnr,
        result.ssim,
        result.per_image.len()
    ));
    if let Some(path) = &g.json {
        let mut registry = load_registry(path)?;
        let record = registry.entry(spec.to_string()).or_default();
        record.parameters = Some(bank.num_values() as u64);
        record.psnr.insert(label.clone(), result.psnr);
        record.ssim.insert(label.clone(), result.ssim);
        save_registry(path, &registry)?;
    }
    Ok(json!({
        "command": "eval",
        "model": spec.to_string(),
        "dataset": label,
        "images": result.per_image.len(),
        "skipped": result.skipped,
        "psnr": finite_or_string(result.psnr),
        "ssim": result.ssim,
    }))
}

fn finite_or_string(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}
