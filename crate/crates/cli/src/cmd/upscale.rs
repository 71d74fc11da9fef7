use std::path::PathBuf;

use anyhow::Result;
use esr_core::imageio::{load_image, save_pnm, Image};
use esr_core::metrics::{rgb_to_ycbcr_bt709, ycbcr_to_rgb_bt709};
use esr_core::models::bicubic_bank;
use serde_json::json;

use crate::common::{Globals, ModelSource};

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    source: ModelSource,
    /// Input image (PGM/PPM, or PNG/BMP when built with png support).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output PNM; gray input gives PGM, colour input PPM.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

pub fn run(args: Args, g: &Globals) -> Result<serde_json::Value> {
    let bank = args.source.load(g.seed)?;
    let image = load_image(&args.input)?;
    let out = if image.channels == 1 {
        Image::gray(&bank.upscale(&image.plane(0))?)?
    } else {
        // only luma goes through the model
        let [y, cb, cr] = rgb_to_ycbcr_bt709(&image)?;
        let chroma = bicubic_bank(bank.spec().scale)?;
        ycbcr_to_rgb_bt709(&bank.upscale(&y)?, &chroma.forward(&cb)?, &chroma.forward(&cr)?)?
    };
    save_pnm(&args.output, &out)?;
    g.progress(format!(
        "{}: {}x{} -> {}x{}",
        bank.spec(),
        image.width,
        image.height,
        out.width,
        out.height
    ));
    Ok(json!({
        "command": "upscale",
        "model": bank.spec().to_string(),
        "input": args.input,
        "output": args.output,
        "width": out.width,
        "height": out.height,
        "channels": out.channels,
    }))
}
