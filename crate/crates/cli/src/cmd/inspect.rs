use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::ValueEnum;
use esr_core::analysis::{
    corr_csv, export_scatter_csv, filter_banks, grid_csv, pearson_corr_matrix, role_bank, spectrum, FilterBank,
    Metric, Role, DEFAULT_KAISER_BETA,
};
use esr_core::bench::read_registry;
use esr_core::imageio::filter_to_pgm;
use esr_core::{Error, WeightBank};
use serde_json::json;

use crate::common::{io, usage, write_file, Globals, ModelSource};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Emit {
    /// PGM grid of the reconstructed interpolation filters.
    Filters,
    /// CSV of Pearson correlations between matching and upscaling filters.
    Corr,
    /// CSV of one filter's Kaiser-windowed magnitude spectrum.
    Spectrum,
    /// CSV of quality against speed from a registry.
    Scatter,
}

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, value_enum)]
    emit: Emit,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Filter role for spectrum: matching, upscaling, query, key or value.
    #[arg(long)]
    role: Option<String>,
    /// Filter index within the role for spectrum.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Kaiser window shape for spectrum.
    #[arg(long, default_value_t = DEFAULT_KAISER_BETA)]
    beta: f64,
    /// Registry read by scatter.
    #[arg(long, value_name = "FILE")]
    registry: Option<PathBuf>,
    /// Speed key suffix for scatter.
    #[arg(long, default_value = "local")]
    device: String,
    /// Dataset key suffix for scatter.
    #[arg(long)]
    dataset: Option<String>,
    /// Quality metric for scatter: psnr or ssim.
    #[arg(long, default_value = "psnr")]
    metric: String,
}

pub fn run(args: Args, g: &Globals) -> Result<serde_json::Value> {
    let summary = match args.emit {
        Emit::Scatter => scatter(&args)?,
        emit => {
            if !args.source.is_given() {
                bail!(usage("--weights or --model is required"));
            }
            let bank = args.source.load(g.seed)?;
            match emit {
                Emit::Filters => filters(&bank, &args)?,
                Emit::Corr => corr(&bank, &args)?,
                _ => spectrum_csv(&bank, &args)?,
            }
        }
    };
    g.progress(format!("wrote {}", args.out.display()));
    Ok(summary)
}

fn filters(bank: &WeightBank<f32>, args: &Args) -> Result<serde_json::Value> {
    let banks = filter_banks(bank)?;
    let kernels: Vec<Vec<&[f64]>> = banks
        .iter()
        .map(|b| {
            let f = &b.filters;
            (0..f.out_channels())
                .flat_map(|o| (0..f.in_channels()).map(move |i| f.kernel(o, i)))
                .collect()
        })
        .collect();
    let (kh, kw) = (banks[0].filters.kh(), banks[0].filters.kw());
    let cols = kernels.iter().map(Vec::len).max().unwrap_or(0);
    let rows = kernels.len();
    // one row of tiles per role, separated by a one pixel gap at the minimum
    let (height, width) = (rows * (kh + 1) - 1, cols * (kw + 1) - 1);
    let lo = kernels.iter().flatten().flat_map(|k| k.iter()).cloned().fold(f64::INFINITY, f64::min);
    let mut grid = vec![lo as f32; height * width];
    for (r, row) in kernels.iter().enumerate() {
        for (c, k) in row.iter().enumerate() {
            for y in 0..kh {
                for x in 0..kw {
                    grid[(r * (kh + 1) + y) * width + c * (kw + 1) + x] = k[y * kw + x] as f32;
                }
            }
        }
    }
    write_file(&args.out, filter_to_pgm(&grid, height, width)?)?;
    Ok(json!({
        "command": "inspect",
        "emit": "filters",
        "model": bank.spec().to_string(),
        "out": args.out,
        "roles": banks.iter().map(|b| b.role.name()).collect::<Vec<_>>(),
        "filter_size": [kh, kw],
        "width": width,
        "height": height,
    }))
}

fn corr(bank: &WeightBank<f32>, args: &Args) -> Result<serde_json::Value> {
    let matrix = pearson_corr_matrix(&role_bank(bank, Role::Matching)?, &role_bank(bank, Role::Upscaling)?)?;
    write_file(&args.out, corr_csv(&matrix))?;
    Ok(json!({
        "command": "inspect",
        "emit": "corr",
        "model": bank.spec().to_string(),
        "out": args.out,
        "rows": matrix.len(),
        "cols": matrix.first().map_or(0, Vec::len),
    }))
}

fn parse_role(name: &str) -> Result<Role> {
    [Role::Matching, Role::Upscaling, Role::Query, Role::Key, Role::Value]
        .into_iter()
        .find(|r| r.name() == name)
        .ok_or_else(|| usage(format!("unknown role {name:?}")).into())
}

fn spectrum_csv(bank: &WeightBank<f32>, args: &Args) -> Result<serde_json::Value> {
    let chosen: FilterBank = match &args.role {
        Some(name) => role_bank(bank, parse_role(name)?)?,
        None => {
            let banks = filter_banks(bank)?;
            let pick = banks
                .iter()
                .position(|b| matches!(b.role, Role::Upscaling | Role::Value))
                .unwrap_or(0);
            banks.into_iter().nth(pick).expect("every model has a filter bank")
        }
    };
    let f = &chosen.filters;
    if args.index >= f.out_channels() {
        bail!(usage(format!("--index {} out of range, {} has {}", args.index, chosen.role, f.out_channels())));
    }
    let (mag, n) = spectrum(f.kernel(args.index, 0), f.kh(), f.kw(), args.beta)?;
    write_file(&args.out, grid_csv(&mag, n))?;
    Ok(json!({
        "command": "inspect",
        "emit": "spectrum",
        "model": bank.spec().to_string(),
        "role": chosen.role.name(),
        "index": args.index,
        "out": args.out,
        "size": n,
    }))
}

fn scatter(args: &Args) -> Result<serde_json::Value> {
    let Some(path) = &args.registry else {
        bail!(usage("scatter needs --registry"));
    };
    let Some(dataset) = &args.dataset else {
        bail!(usage("scatter needs --dataset"));
    };
    let metric: Metric = args.metric.parse()?;
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            anyhow::Error::new(io(format!("registry: not found: {}", path.display())))
        } else {
            Error::io(format!("registry: {}", path.display()), e).into()
        }
    })?;
    let registry = read_registry(&bytes)?;
    let (csv, skipped) = export_scatter_csv(&registry, &args.device, dataset, metric);
    write_file(&args.out, &csv)?;
    Ok(json!({
        "command": "inspect",
        "emit": "scatter",
        "out": args.out,
        "rows": csv.lines().count() - 1,
        "skipped": skipped,
    }))
}
