//! Filter interpretability: reconstructed interpolation filters, correlation
//! between filter banks, windowed spectra and scatter exports.

use std::fmt;

use crate::bench::Registry;
use crate::error::{Error, Result};
use crate::models::{Arch, ParamValue, WeightBank};
use crate::tensor::{multiplex_filter, ConvWeights};

pub const DEFAULT_KAISER_BETA: f64 = 8.0;
pub const SPECTRUM_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Matching,
    Upscaling,
    Query,
    Key,
    Value,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Matching => "matching",
            Role::Upscaling => "upscaling",
            Role::Query => "query",
            Role::Key => "key",
            Role::Value => "value",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Full-size filters of one role, shaped (C, inputs, s·k, s·k).
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub role: Role,
    pub filters: ConvWeights<f64>,
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.filters.out_channels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All coefficients of filter `i`, across its input channels.
    pub fn flat(&self, i: usize) -> &[f64] {
        let n = self.filters.in_channels() * self.filters.kh() * self.filters.kw();
        &self.filters.data()[i * n..(i + 1) * n]
    }
}

/// Multiplexes each consecutive group of s² efficient filters into one
/// interpolation filter.
pub fn reconstruct_interp_filters(efficient: &ConvWeights<f32>, scale: usize, role: Role) -> Result<FilterBank> {
    Ok(FilterBank {
        role,
        filters: multiplex_filter(&efficient.cast::<f64>(), scale)?,
    })
}

fn filters(bank: &WeightBank<f32>, name: &str) -> Result<ConvWeights<f32>> {
    match bank.get(name) {
        Some(ParamValue::Filters(w)) => Ok(w.clone()),
        _ => Err(Error::RoleUnavailable(format!("{} has no {name}", bank.spec()))),
    }
}

/// Reconstructed filter banks of a model, in head channel order.
pub fn filter_banks(bank: &WeightBank<f32>) -> Result<Vec<FilterBank>> {
    let spec = bank.spec();
    let s = spec.scale;
    let split = |w: &ConvWeights<f32>, roles: &[Role]| -> Result<Vec<FilterBank>> {
        let per = w.out_channels() / roles.len();
        roles
            .iter()
            .enumerate()
            .map(|(i, &role)| reconstruct_interp_filters(&w.select_out(i * per, (i + 1) * per)?, s, role))
            .collect()
    };
    match spec.arch {
        Arch::Bicubic | Arch::EsrMax => split(&filters(bank, "filter.weight")?, &[Role::Upscaling]),
        Arch::EsrTm | Arch::EsrCnn => split(&filters(bank, "filter.weight")?, &[Role::Matching, Role::Upscaling]),
        Arch::EsrTr => split(&filters(bank, "filter.weight")?, &[Role::Query, Role::Key, Role::Value]),
        Arch::Espcn => split(&filters(bank, "conv3.weight")?, &[Role::Upscaling]),
        Arch::Fsrcnn => Ok(vec![FilterBank {
            role: Role::Upscaling,
            filters: filters(bank, "deconv.weight")?.cast(),
        }]),
    }
}

pub fn role_bank(bank: &WeightBank<f32>, role: Role) -> Result<FilterBank> {
    filter_banks(bank)?
        .into_iter()
        .find(|b| b.role == role)
        .ok_or_else(|| Error::RoleUnavailable(format!("{} has no {role} filters", bank.spec())))
}

/// Pearson correlation of two coefficient vectors; `None` when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Entry (i, j) correlates `a[i]` with `b[j]`; undefined entries are `None`.
pub fn pearson_corr_matrix(a: &FilterBank, b: &FilterBank) -> Result<Vec<Vec<Option<f64>>>> {
    if a.len() != b.len() || a.flat(0).len() != b.flat(0).len() {
        return Err(Error::shape(format!(
            "banks differ: {:?} vs {:?}",
            a.filters.dims(),
            b.filters.dims()
        )));
    }
    Ok((0..a.len())
        .map(|i| (0..b.len()).map(|j| pearson(a.flat(i), b.flat(j))).collect())
        .collect())
}

pub fn corr_csv(matrix: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row
            .iter()
            .map(|v| v.map_or_else(|| "undefined".to_string(), |v| v.to_string()))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

pub fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let norm = bessel_i0(beta);
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect()
}

/// Applies a separable Kaiser window, zero-pads to 64×64 (or the filter size if
/// larger) and returns the DFT magnitude, row-major with DC first, together
/// with the padded side length.
pub fn spectrum(filter: &[f64], height: usize, width: usize, beta: f64) -> Result<(Vec<f64>, usize)> {
    if filter.is_empty() || filter.len() != height * width {
        return Err(Error::shape(format!("{height}x{width} filter with {} values", filter.len())));
    }
    let n = SPECTRUM_SIZE.max(height).max(width);
    let (wy, wx) = (kaiser_window(height, beta), kaiser_window(width, beta));
    let mut re = vec![0.0; n * n];
    for y in 0..height {
        for x in 0..width {
            re[y * n + x] = filter[y * width + x] * wy[y] * wx[x];
        }
    }
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| {
            let t = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (t.cos(), t.sin())
        })
        .unzip();
    // rows, then columns
    let mut rows = vec![(0.0, 0.0); n * n];
    for y in 0..height {
        for u in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for x in 0..width {
                let k = (u * x) % n;
                a += re[y * n + x] * cos[k];
                b += re[y * n + x] * sin[k];
            }
            rows[y * n + u] = (a, b);
        }
    }
    let mut mag = vec![0.0; n * n];
    for v in 0..n {
        for u in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for y in 0..height {
                let k = (v * y) % n;
                let (r, i) = rows[y * n + u];
                a += r * cos[k] - i * sin[k];
                b += r * sin[k] + i * cos[k];
            }
            mag[v * n + u] = a.hypot(b);
        }
    }
    Ok((mag, n))
}

pub fn grid_csv(values: &[f64], width: usize) -> String {
    values
        .chunks(width)
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

/// Quality metric plotted against speed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            _ => Err(Error::invalid(format!("unknown metric {s:?}, expected psnr or ssim"))),
        }
    }
}

/// Scatter rows `model,parameters,speed,<metric>` sorted by speed, and the
/// number of records skipped for missing fields.
pub fn export_scatter_csv(registry: &Registry, device: &str, dataset: &str, metric: Metric) -> (String, usize) {
    let column = match metric {
        Metric::Psnr => "psnr",
        Metric::Ssim => "ssim",
    };
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (name, rec) in registry {
        let value = match metric {
            Metric::Psnr => rec.psnr.get(dataset),
            Metric::Ssim => rec.ssim.get(dataset),
        };
        match (rec.parameters, rec.speed.get(device), value) {
            (Some(p), Some(&speed), Some(&v)) => rows.push((name.as_str(), p, speed, v)),
            _ => skipped += 1,
        }
    }
    rows.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(b.0)));
    let mut out = format!("model,parameters,speed,{column}\n");
    for (name, p, speed, v) in rows {
        out.push_str(&format!("{name},{p},{speed},{v}\n"));
    }
    (out, skipped)
}
