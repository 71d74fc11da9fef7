use std::path::PathBuf;

use anyhow::{bail, Result};
use esr_core::imageio::save_weights;
use esr_core::models::parse_model_name;
use esr_core::train::{history_csv, train_loop, TrainConfig};
use serde_json::json;

use crate::common::{usage, write_file, Globals};

#[derive(clap::Args)]
pub struct Args {
    /// Model name such as eSR-TM_s2_K3_C4.
    #[arg(long, value_name = "NAME")]
    arch: String,
    /// Directory of training images.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Weight file to write; the loss history goes next to it as .loss.csv.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Minibatches per epoch; defaults to one pass over the images.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    minibatch: usize,
    /// High resolution patch side; defaults to 78 (76 for x4).
    #[arg(long)]
    patch: Option<usize>,
}

pub fn run(args: Args, g: &Globals) -> Result<serde_json::Value> {
    let spec = parse_model_name(&args.arch)?;
    if args.epochs == 0 {
        bail!(usage("--epochs must be positive"));
    }
    let cfg = TrainConfig {
        lr0: args.lr,
        minibatch: args.minibatch,
        patch_size: args.patch,
        steps_per_epoch: args.steps_per_epoch,
        seed: g.seed,
        ..TrainConfig::with_epochs(args.epochs)
    };
    let every = (args.epochs / 20).max(1);
    let outcome = train_loop(&spec, &args.data, &cfg, |e| {
        if (e.epoch + 1) % every == 0 || e.epoch + 1 == args.epochs {
            g.progress(format!("epoch {:>6}  lr {:.2e}  loss {:.6e}", e.epoch + 1, e.lr, e.mean_loss));
        }
    })?;
    save_weights(&args.out, &outcome.weights)?;
    let history = args.out.with_extension("loss.csv");
    write_file(&history, history_csv(&outcome.history))?;
    Ok(json!({
        "command": "train",
        "model": spec.to_string(),
        "weights": args.out,
        "history": history,
        "epochs": args.epochs,
        "final_loss": outcome.history.last().map(|h| h.mean_loss),
        "skipped_images": outcome.skipped,
    }))
}
