//! Binary PNM codecs, dataset listing and the `ESRW` weight file format.
//!
//! Weight file layout (all integers and floats little-endian):
//!
//! ```text
//! "ESRW" | version: u32 = 1 | header_len: u32 | header: UTF-8 JSON | payload: f32 × N
//! ```
//!
//! The JSON header is `{"model_name": "...", "layers": [{"name": "...", "shape": [..]}, ..]}`
//! and the payload concatenates every layer's values in header order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{parse_model_name, ModelSpec, WeightBank};
use crate::tensor::Tensor;

/// Interleaved 8-bit-range image held as floats in [0, 255].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(plane: &Tensor<f32>) -> Result<Self> {
        let s = plane.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::shape(format!("expected one plane, got {s}")));
        }
        Image::new(s.w, s.h, 1, plane.data().to_vec())
    }

    /// Channel `c` as a (1, 1, h, w) tensor.
    pub fn plane(&self, c: usize) -> Tensor<f32> {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Tensor::plane_from_vec(self.height, self.width, data).expect("image dimensions are consistent")
    }

    /// Interleaves single-channel planes of equal size.
    pub fn from_planes(planes: &[Tensor<f32>]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| Error::invalid("no planes"))?.shape();
        let mut data = vec![0.0; first.plane() * planes.len()];
        for (c, p) in planes.iter().enumerate() {
            if p.shape() != first {
                return Err(Error::shape("planes differ in size"));
            }
            for (i, &v) in p.data().iter().enumerate() {
                data[i * planes.len() + c] = v;
            }
        }
        Image::new(first.w, first.h, planes.len(), data)
    }
}

fn parse_header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Pnm("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = parse_header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Pnm(format!("bad {what}")))
}

/// Decodes binary P5 (gray) or P6 (RGB) with maxval 255.
pub fn read_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = parse_header_token(bytes, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::Pnm("bad magic, expected P5 or P6".into())),
    };
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Pnm(format!("maxval {maxval} unsupported, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Pnm("truncated payload".into()));
    }
    pos += 1;
    let need = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Pnm(format!(
            "truncated payload: need {need} bytes, have {}",
            raster.len()
        )));
    }
    let data = raster[..need].iter().map(|&b| b as f32).collect();
    Image::new(width, height, channels, data)
}

/// Encodes as binary P5/P6; values are clipped to [0, 255] and rounded to nearest.
pub fn write_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.data.iter().map(|&v| v.clamp(0.0, 255.0).round() as u8));
    out
}

fn is_pnm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("pnm" | "pgm" | "ppm")
    )
}

#[cfg(feature = "png")]
fn is_png(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "bmp")
    )
}

#[cfg(not(feature = "png"))]
fn is_png(_: &Path) -> bool {
    false
}

#[cfg(feature = "png")]
fn decode_other(bytes: &[u8], path: &Path) -> Result<Image> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Image::new(w as usize, h as usize, 3, rgb.into_raw().into_iter().map(f32::from).collect())
    } else {
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        Image::new(w as usize, h as usize, 1, gray.into_raw().into_iter().map(f32::from).collect())
    }
}

#[cfg(not(feature = "png"))]
fn decode_other(_: &[u8], path: &Path) -> Result<Image> {
    Err(Error::Dataset {
        path: path.to_path_buf(),
        reason: "only PNM images are supported in this build".into(),
    })
}

pub fn is_supported_image(path: &Path) -> bool {
    is_pnm(path) || is_png(path)
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if is_pnm(path) || bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        read_pnm(&bytes)
    } else {
        decode_other(&bytes, path)
    }
}

pub fn save_pnm(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, write_pnm(image)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Image files of a dataset directory, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_supported_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset {
            path: dir.to_path_buf(),
            reason: "no readable images".into(),
        });
    }
    Ok(files)
}

pub const WEIGHT_MAGIC: &[u8; 4] = b"ESRW";
pub const WEIGHT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightHeader {
    model_name: String,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn write_weights(bank: &WeightBank<f32>) -> Vec<u8> {
    let header = WeightHeader {
        model_name: bank.spec().to_string(),
        layers: bank
            .params()
            .iter()
            .map(|p| LayerHeader {
                name: p.name.clone(),
                shape: match &p.value {
                    crate::models::ParamValue::Filters(w) => w.dims().to_vec(),
                    crate::models::ParamValue::Vector(v) => vec![v.len()],
                },
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * bank.num_values());
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for values in bank.values() {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::Weights("truncated preamble".into()))
}

pub fn read_weights(bytes: &[u8]) -> Result<(ModelSpec, WeightBank<f32>)> {
    if bytes.get(..4) != Some(WEIGHT_MAGIC.as_slice()) {
        return Err(Error::Weights("bad magic, expected ESRW".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != WEIGHT_VERSION {
        return Err(Error::Weights(format!("unsupported version {version}")));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::Weights("truncated header".into()))?;
    let header: WeightHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Weights(format!("bad header: {e}")))?;
    let spec = parse_model_name(&header.model_name)?;
    let payload = &bytes[12 + header_len..];
    let total: usize = header.layers.iter().map(|l| l.shape.iter().product::<usize>()).sum();
    if payload.len() != total * 4 {
        return Err(Error::Weights(format!(
            "payload has {} bytes, header describes {}",
            payload.len(),
            total * 4
        )));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")));
    let entries = header
        .layers
        .into_iter()
        .map(|l| {
            let n = l.shape.iter().product();
            let data: Vec<f32> = floats.by_ref().take(n).collect();
            (l.name, l.shape, data)
        })
        .collect();
    let bank = WeightBank::from_values(spec, entries)?;
    Ok((spec, bank))
}

pub fn load_weights(path: &Path) -> Result<(ModelSpec, WeightBank<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("weights: {}", path.display()), e))?;
    read_weights(&bytes)
}

pub fn save_weights(path: &Path, bank: &WeightBank<f32>) -> Result<()> {
    fs::write(path, write_weights(bank)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes a single filter as a gray PGM, mapping its range linearly onto 0..=255.
pub fn filter_to_pgm(values: &[f32], height: usize, width: usize) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::shape("filter grid size mismatch"));
    }
    let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = values.iter().map(|&v| (v - lo) / span * 255.0).collect();
    Ok(write_pnm(&Image::new(width, height, 1, data)?))
}
