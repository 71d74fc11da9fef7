//! Reference-based quality metrics on luma planes in [0, 255], plus the color
//! conversions and bicubic downscaler used around them.

use crate::error::{Error, Result};
use crate::imageio::Image;
use crate::models::bicubic;
use crate::tensor::{conv2d, pad2d, PadMode, Tensor};

pub const PEAK: f64 = 255.0;
pub const SSIM_C1: f64 = 6.5025;
pub const SSIM_C2: f64 = 58.5225;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_same(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("metric inputs differ: {} vs {}", x.shape(), y.shape())));
    }
    Ok(())
}

fn clip(v: f32) -> f64 {
    (v as f64).clamp(0.0, PEAK)
}

pub fn mse(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64> {
    check_same(x, y)?;
    if x.is_empty() {
        return Err(Error::invalid("empty images"));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (clip(a) - clip(b)).powi(2))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical inputs give `f64::INFINITY`.
pub fn psnr(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Separable valid-mode filtering of an h×w plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(t, &g)| g * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, &g)| g * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all 11×11 Gaussian windows (σ = 1.5) that fit
/// inside every (n, c) plane.
pub fn ssim(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64> {
    check_same(x, y)?;
    let s = x.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            s.h, s.w
        )));
    }
    let g = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            let a: Vec<f64> = x.plane(n, c).iter().map(|&v| clip(v)).collect();
            let b: Vec<f64> = y.plane(n, c).iter().map(|&v| clip(v)).collect();
            let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
            let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
            let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
            let [mu_a, mu_b, e_aa, e_bb, e_ab] =
                [&a, &b, &aa, &bb, &ab].map(|p| filter_valid(p, s.h, s.w, &g));
            for i in 0..mu_a.len() {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
            count += mu_a.len();
        }
    }
    Ok(total / count as f64)
}

fn rgb_planes(image: &Image) -> Result<[Tensor<f32>; 3]> {
    if image.channels != 3 {
        return Err(Error::invalid(format!("expected an RGB image, got {} channel(s)", image.channels)));
    }
    Ok([image.plane(0), image.plane(1), image.plane(2)])
}

fn combine(planes: &[Tensor<f32>; 3], k: [f64; 3], offset: f64, gain: f64) -> Tensor<f32> {
    let [r, g, b] = planes;
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| (offset + gain * (k[0] * r as f64 + k[1] * g as f64 + k[2] * b as f64)) as f32)
        .collect();
    Tensor::new(r.shape(), data).expect("planes share a shape")
}

const BT709: [f64; 3] = [0.2126, 0.7152, 0.0722];
const BT601: [f64; 3] = [0.299, 0.587, 0.114];

/// Video-range BT.709 luma: 16 + 219/255 · (0.2126 R + 0.7152 G + 0.0722 B).
pub fn rgb_to_luma_bt709(image: &Image) -> Result<Tensor<f32>> {
    Ok(combine(&rgb_planes(image)?, BT709, 16.0, 219.0 / 255.0))
}

/// Full-range BT.601 gray: 0.299 R + 0.587 G + 0.114 B.
pub fn rgb_to_gray_bt601(image: &Image) -> Result<Tensor<f32>> {
    Ok(combine(&rgb_planes(image)?, BT601, 0.0, 1.0))
}

/// Evaluation luma: BT.709 for RGB, the stored values for gray images.
pub fn eval_luma(image: &Image) -> Result<Tensor<f32>> {
    match image.channels {
        1 => Ok(image.plane(0)),
        _ => rgb_to_luma_bt709(image),
    }
}

/// Training gray: BT.601 for RGB, the stored values for gray images.
pub fn train_gray(image: &Image) -> Result<Tensor<f32>> {
    match image.channels {
        1 => Ok(image.plane(0)),
        _ => rgb_to_gray_bt601(image),
    }
}

/// Video-range BT.709 Y, Cb, Cr planes.
pub fn rgb_to_ycbcr_bt709(image: &Image) -> Result<[Tensor<f32>; 3]> {
    let planes = rgb_planes(image)?;
    let [kr, _, kb] = BT709;
    let y = combine(&planes, BT709, 16.0, 219.0 / 255.0);
    let cb_k = [-kr / (2.0 * (1.0 - kb)), -(1.0 - kr - kb) / (2.0 * (1.0 - kb)), 0.5];
    let cr_k = [0.5, -(1.0 - kr - kb) / (2.0 * (1.0 - kr)), -kb / (2.0 * (1.0 - kr))];
    let cb = combine(&planes, cb_k, 128.0, 224.0 / 255.0);
    let cr = combine(&planes, cr_k, 128.0, 224.0 / 255.0);
    Ok([y, cb, cr])
}

/// Inverse of [`rgb_to_ycbcr_bt709`]; output is unclipped.
pub fn ycbcr_to_rgb_bt709(y: &Tensor<f32>, cb: &Tensor<f32>, cr: &Tensor<f32>) -> Result<Image> {
    check_same(y, cb)?;
    check_same(y, cr)?;
    let [kr, kg, kb] = BT709;
    let n = y.len();
    let mut rgb = [vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]];
    for i in 0..n {
        let yl = (y.data()[i] as f64 - 16.0) * 255.0 / 219.0;
        let pb = (cb.data()[i] as f64 - 128.0) * 255.0 / 224.0;
        let pr = (cr.data()[i] as f64 - 128.0) * 255.0 / 224.0;
        let r = yl + 2.0 * (1.0 - kr) * pr;
        let b = yl + 2.0 * (1.0 - kb) * pb;
        let g = (yl - kr * r - kb * b) / kg;
        rgb[0][i] = r as f32;
        rgb[1][i] = g as f32;
        rgb[2][i] = b as f32;
    }
    let planes = rgb.map(|d| Tensor::new(y.shape(), d).expect("same length"));
    Image::from_planes(&planes)
}

/// Bicubic downscaling by `scale` with the anti-aliasing kernel; h and w must be
/// multiples of `scale`.
pub fn downscale_bicubic(x: &Tensor<f32>, scale: usize) -> Result<Tensor<f32>> {
    let s = x.shape();
    if scale == 0 || s.h % scale != 0 || s.w % scale != 0 {
        return Err(Error::invalid(format!(
            "{}x{} is not divisible by scale {scale}",
            s.h, s.w
        )));
    }
    if s.h < scale * 2 || s.w < scale * 2 {
        return Err(Error::invalid("image too small to downscale"));
    }
    // up to 256 taps per output, accumulated in f64
    let padded = pad2d(&x.cast::<f64>(), bicubic::downscale_padding(scale), PadMode::Symmetric)?;
    Ok(conv2d(&padded, &bicubic::downscale_filter::<f64>(scale), scale, 0)?.cast())
}

/// Largest top-left crop whose sides are multiples of `scale`.
pub fn modcrop(x: &Tensor<f32>, scale: usize) -> Tensor<f32> {
    let s = x.shape();
    crop(x, 0, 0, s.h - s.h % scale, s.w - s.w % scale)
}

pub fn crop(x: &Tensor<f32>, top: usize, left: usize, h: usize, w: usize) -> Tensor<f32> {
    let s = x.shape();
    let shape = crate::tensor::Shape::new(s.n, s.c, h, w);
    Tensor::from_fn(shape, |n, c, y, xx| x.at(n, c, top + y, left + xx))
}

/// Removes `border` pixels from every side.
pub fn crop_border(x: &Tensor<f32>, border: usize) -> Result<Tensor<f32>> {
    let s = x.shape();
    if s.h <= 2 * border || s.w <= 2 * border {
        return Err(Error::invalid(format!("{}x{} image has no interior after a {border}-pixel crop", s.h, s.w)));
    }
    Ok(crop(x, border, border, s.h - 2 * border, s.w - 2 * border))
}

pub fn round_to_u8(x: &Tensor<f32>) -> Tensor<f32> {
    x.map(|v| v.clamp(0.0, 255.0).round())
}
