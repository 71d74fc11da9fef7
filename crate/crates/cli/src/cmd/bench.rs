use anyhow::{bail, Result};
use esr_core::bench::{load_registry, save_registry, speed_fhd, time_model};
use esr_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::common::{usage, Globals, ModelSource};

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    source: ModelSource,
    /// Input width in pixels.
    #[arg(long, default_value_t = 960)]
    width: usize,
    /// Input height in pixels.
    #[arg(long, default_value_t = 540)]
    height: usize,
    /// Timed runs after one warm-up.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Suffix of the registry speed key.
    #[arg(long, default_value = "local")]
    device_label: String,
}

pub fn run(args: Args, g: &Globals) -> Result<serde_json::Value> {
    if args.width == 0 || args.height == 0 || args.runs == 0 {
        bail!(usage("--width, --height and --runs must be positive"));
    }
    let bank = args.source.load(g.seed)?;
    let spec = bank.spec().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let input = Tensor::from_fn(Shape::new(1, 1, args.height, args.width), |_, _, _, _| {
        rng.gen_range(0.0..255.0f32)
    });
    let timing = time_model(&bank, &input, args.runs)?;
    let out_pixels = args.width * args.height * spec.scale * spec.scale;
    let speed = speed_fhd(out_pixels, timing.min())?;
    g.progress(format!("{spec}: min {:.6} s, {speed:.3} FHD/s", timing.min()));
    if let Some(path) = &g.json {
        let mut registry = load_registry(path)?;
        let record = registry.entry(spec.to_string()).or_default();
        record.parameters = Some(bank.num_values() as u64);
        record.speed.insert(args.device_label.clone(), speed);
        save_registry(path, &registry)?;
    }
    Ok(json!({
        "command": "bench",
        "model": spec.to_string(),
        "device": args.device_label,
        "width": args.width,
        "height": args.height,
        "runs": args.runs,
        "min_seconds": timing.min(),
        "mean_seconds": timing.mean(),
        "samples": timing.samples,
        "speed_fhd": speed,
    }))
}
