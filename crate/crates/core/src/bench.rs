//! Speed measurement, dataset evaluation and the JSON results registry.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::imageio::{list_images, load_image, Image};
use crate::metrics::{crop_border, downscale_bicubic, eval_luma, modcrop, psnr, round_to_u8, ssim, SSIM_WINDOW};
use crate::models::WeightBank;
use crate::tensor::Tensor;

pub const FHD_PIXELS: f64 = 1920.0 * 1080.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    /// Durations of the timed runs in seconds, in run order.
    pub samples: Vec<f64>,
}

impl Timing {
    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Times `runs` forward passes after one untimed warm-up.
pub fn time_model(bank: &WeightBank<f32>, input: &Tensor<f32>, runs: usize) -> Result<Timing> {
    if runs == 0 {
        return Err(Error::invalid("at least one timed run is required"));
    }
    bank.forward(input)?;
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = bank.forward(input)?;
        samples.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    Ok(Timing { samples })
}

/// Output throughput in Full-HD frames per second.
pub fn speed_fhd(output_pixels: usize, seconds: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {seconds}")));
    }
    Ok(output_pixels as f64 / (seconds * FHD_PIXELS))
}

/// One registry entry. Serialises flat: `parameters`, `psnr_<dataset>`,
/// `ssim_<dataset>`, `speed_<device>`, plus any other keys read from a file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchRecord {
    pub parameters: Option<u64>,
    pub psnr: BTreeMap<String, f64>,
    pub ssim: BTreeMap<String, f64>,
    pub speed: BTreeMap<String, f64>,
    pub extra: BTreeMap<String, Value>,
}

// JSON has no infinities; PSNR of identical images is one.
fn number(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

fn parse_number(key: &str, v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{key}: not a float")),
        Value::String(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            _ => Err(format!("{key}: expected a number, got {s:?}")),
        },
        _ => Err(format!("{key}: expected a number")),
    }
}

impl Serialize for BenchRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map: Map<String, Value> = self.extra.clone().into_iter().collect();
        if let Some(p) = self.parameters {
            map.insert("parameters".into(), Value::from(p));
        }
        for (prefix, values) in [("psnr", &self.psnr), ("ssim", &self.ssim), ("speed", &self.speed)] {
            for (k, &v) in values {
                map.insert(format!("{prefix}_{k}"), number(v));
            }
        }
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BenchRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = Map::<String, Value>::deserialize(deserializer)?;
        let mut record = BenchRecord::default();
        for (key, value) in map {
            if key == "parameters" {
                record.parameters = Some(value.as_u64().ok_or_else(|| D::Error::custom("parameters: expected an integer"))?);
                continue;
            }
            let slot = [("psnr_", &mut record.psnr), ("ssim_", &mut record.ssim), ("speed_", &mut record.speed)]
                .into_iter()
                .find_map(|(prefix, target)| key.strip_prefix(prefix).map(|rest| (rest.to_string(), target)));
            match slot {
                Some((name, target)) => {
                    target.insert(name, parse_number(&key, &value).map_err(D::Error::custom)?);
                }
                None => {
                    record.extra.insert(key, value);
                }
            }
        }
        Ok(record)
    }
}

/// Records keyed by model name, in name order.
pub type Registry = BTreeMap<String, BenchRecord>;

pub fn write_registry(registry: &Registry) -> String {
    serde_json::to_string_pretty(registry).expect("registry serializes")
}

pub fn read_registry(bytes: &[u8]) -> Result<Registry> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Reads a registry file, or an empty registry if it does not exist.
pub fn load_registry(path: &Path) -> Result<Registry> {
    match std::fs::read(path) {
        Ok(bytes) => read_registry(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Registry::new()),
        Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
    }
}

pub fn save_registry(path: &Path, registry: &Registry) -> Result<()> {
    std::fs::write(path, write_registry(registry))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    /// Pixels removed from each side before scoring; `None` uses the scale.
    pub border: Option<usize>,
    /// Round the model output to 8 bits before scoring.
    pub round_output: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub psnr: f64,
    pub ssim: f64,
    pub per_image: Vec<(f64, f64)>,
    pub skipped: usize,
}

/// PSNR and SSIM of the model's reconstruction of one image from its bicubic
/// downscaled luma.
pub fn eval_image(bank: &WeightBank<f32>, image: &Image, opts: EvalOptions) -> Result<(f64, f64)> {
    let scale = bank.spec().scale;
    let border = opts.border.unwrap_or(scale);
    let hr = modcrop(&eval_luma(image)?, scale);
    let lr = downscale_bicubic(&hr, scale)?;
    let mut sr = bank.upscale(&lr)?;
    if opts.round_output {
        sr = round_to_u8(&sr);
    }
    let (hr, sr) = (crop_border(&hr, border)?, crop_border(&sr, border)?);
    Ok((psnr(&sr, &hr)?, ssim(&sr, &hr)?))
}

fn evaluable(image: &Image, scale: usize, border: usize) -> bool {
    let side = |n: usize| n - n % scale;
    let min = SSIM_WINDOW + 2 * border;
    side(image.width) >= min.max(2 * scale) && side(image.height) >= min.max(2 * scale)
}

/// Mean PSNR and SSIM over images; images too small to score are skipped.
pub fn eval_images(bank: &WeightBank<f32>, images: &[Image], opts: EvalOptions) -> Result<EvalResult> {
    let scale = bank.spec().scale;
    let border = opts.border.unwrap_or(scale);
    let mut per_image = Vec::new();
    let mut skipped = 0;
    for image in images {
        if !evaluable(image, scale, border) {
            skipped += 1;
            continue;
        }
        per_image.push(eval_image(bank, image, opts)?);
    }
    if per_image.is_empty() {
        return Err(Error::invalid("no image is large enough to evaluate"));
    }
    let n = per_image.len() as f64;
    Ok(EvalResult {
        psnr: per_image.iter().map(|p| p.0).sum::<f64>() / n,
        ssim: per_image.iter().map(|p| p.1).sum::<f64>() / n,
        per_image,
        skipped,
    })
}

/// [`eval_images`] over a dataset directory; unreadable files count as skipped.
pub fn run_eval(bank: &WeightBank<f32>, dataset_dir: &Path, opts: EvalOptions) -> Result<EvalResult> {
    let mut images = Vec::new();
    let mut unreadable = 0;
    for path in list_images(dataset_dir)? {
        match load_image(&path) {
            Ok(img) => images.push(img),
            Err(_) => unreadable += 1,
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset {
            path: dataset_dir.to_path_buf(),
            reason: "no readable images".into(),
        });
    }
    let mut result = eval_images(bank, &images, opts)?;
    result.skipped += unreadable;
    Ok(result)
}

/// Registry key suffix for a dataset directory: its final path component.
pub fn dataset_label(dir: &Path) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .filter(|n| !n.is_empty())
        .unwrap_or("data")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bicubic_bank, ModelSpec, init_weights, Arch};
    use crate::tensor::Shape;

    #[test]
    fn speed_examples() {
        assert_eq!(speed_fhd(2_073_600, 1.0).unwrap(), 1.0);
        assert_eq!(speed_fhd(3840 * 2160, 0.25).unwrap(), 16.0);
        assert_eq!(speed_fhd(0, 0.5).unwrap(), 0.0);
        assert!(speed_fhd(10, 0.0).is_err());
        assert!(speed_fhd(10, -1.0).is_err());
    }

    #[test]
    fn timing_order_statistic() {
        let bank = init_weights(&ModelSpec::single_layer(Arch::EsrTm, 2, 3, 2), 0).unwrap();
        let input = Tensor::full(Shape::new(1, 1, 16, 16), 0.5);
        let t = time_model(&bank, &input, 10).unwrap();
        assert_eq!(t.samples.len(), 10);
        assert!(t.min() <= t.mean());
        assert_eq!(time_model(&bank, &input, 1).unwrap().samples.len(), 1);
        assert!(time_model(&bank, &input, 0).is_err());
    }

    #[test]
    fn registry_schema() {
        assert_eq!(write_registry(&Registry::new()), "{}");
        let json = r#"{"Bicubic_s2": {"parameters": 100, "psnr_Set5": 33.72849620514912,
            "ssim_Set5": 0.928, "speed_AGX": 12.5, "power_AGX": 3.1}}"#;
        let reg = read_registry(json.as_bytes()).unwrap();
        let rec = &reg["Bicubic_s2"];
        assert_eq!(rec.parameters, Some(100));
        assert_eq!(rec.psnr["Set5"], 33.72849620514912);
        assert_eq!(rec.speed["AGX"], 12.5);
        assert!(rec.extra.contains_key("power_AGX"));
        let back = read_registry(write_registry(&reg).as_bytes()).unwrap();
        assert_eq!(back, reg);
        assert!(read_registry(b"{\"x\": {\"psnr_a\": true}}").is_err());
    }

    #[test]
    fn infinite_psnr_survives_roundtrip() {
        let mut reg = Registry::new();
        reg.entry("m".into()).or_default().psnr.insert("flat".into(), f64::INFINITY);
        let back = read_registry(write_registry(&reg).as_bytes()).unwrap();
        assert_eq!(back["m"].psnr["flat"], f64::INFINITY);
    }

    #[test]
    fn constant_image_is_reconstructed_exactly() {
        let img = Image::new(40, 40, 1, vec![128.0; 1600]).unwrap();
        let opts = EvalOptions {
            round_output: true,
            ..EvalOptions::default()
        };
        let r = eval_images(&bicubic_bank(2).unwrap(), &[img.clone()], opts).unwrap();
        assert_eq!(r.psnr, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-9);
        let tiny = Image::new(8, 8, 1, vec![0.0; 64]).unwrap();
        let r = eval_images(&bicubic_bank(2).unwrap(), &[img, tiny], opts).unwrap();
        assert_eq!(r.skipped, 1);
    }
}
