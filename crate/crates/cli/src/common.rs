use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use esr_core::imageio::load_weights;
use esr_core::models::{bicubic_bank, init_weights, parse_model_name, Arch};
use esr_core::{Error, WeightBank};

#[derive(clap::Args)]
pub struct Globals {
    /// Seed for initialisation, sampling and synthetic inputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Result file. For eval and bench this is the registry to update.
    #[arg(long, global = true, value_name = "FILE")]
    pub json: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

impl Globals {
    pub fn progress(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

#[derive(Debug)]
pub enum Category {
    Usage,
    Io,
}

#[derive(Debug)]
pub struct Categorized {
    pub category: Category,
    pub message: String,
}

impl fmt::Display for Categorized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Categorized {}

pub fn usage(message: impl Into<String>) -> Categorized {
    Categorized {
        category: Category::Usage,
        message: message.into(),
    }
}

pub fn io(message: impl Into<String>) -> Categorized {
    Categorized {
        category: Category::Io,
        message: message.into(),
    }
}

/// 2 usage, 3 I/O and data, 4 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Categorized>() {
            return match c.category {
                Category::Usage => 2,
                Category::Io => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonFinite(_) => 4,
                Error::ModelName { .. } | Error::InvalidArgument(_) | Error::RoleUnavailable(_) | Error::Shape(_) => 2,
                Error::Weights(_) | Error::Pnm(_) | Error::Registry(_) | Error::Dataset { .. } | Error::Io { .. } => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    3
}

#[derive(clap::Args, Clone, Debug)]
pub struct ModelSource {
    /// Weight file written by `esr train`.
    #[arg(long, value_name = "FILE", conflicts_with = "model")]
    pub weights: Option<PathBuf>,
    /// Model name. `Bicubic_s<scale>` is exact; other architectures start
    /// from the seeded initialisation.
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
}

impl ModelSource {
    pub fn is_given(&self) -> bool {
        self.weights.is_some() || self.model.is_some()
    }

    pub fn load(&self, seed: u64) -> Result<WeightBank<f32>> {
        match (&self.weights, &self.model) {
            (Some(path), _) => load_weight_file(path),
            (None, Some(name)) => {
                let spec = parse_model_name(name)?;
                Ok(match spec.arch {
                    Arch::Bicubic => bicubic_bank(spec.scale)?,
                    _ => init_weights(&spec, seed)?,
                })
            }
            (None, None) => bail!(usage("one of --weights or --model is required")),
        }
    }
}

pub fn load_weight_file(path: &Path) -> Result<WeightBank<f32>> {
    if !path.exists() {
        bail!(io(format!("weights: not found: {}", path.display())));
    }
    Ok(load_weights(path)?.1)
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}
