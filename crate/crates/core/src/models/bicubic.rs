//! Keys cubic convolution (a = −0.5) in split-filter form.

use crate::tensor::{ConvWeights, Padding, Scalar};

pub const KEYS_A: f64 = -0.5;

/// Taps per axis of each efficient phase filter. Four taps are enough for any
/// single phase, but the four-tap windows of phases left and right of a low
/// resolution pixel differ by one, so a common window needs five.
pub const PHASE_TAPS: usize = 5;

/// Keys cubic convolution kernel.
pub fn keys(x: f64) -> f64 {
    let a = KEYS_A;
    let t = x.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((t - 5.0) * t + 8.0) * t * a - 4.0 * a
    } else {
        0.0
    }
}

/// Sub-pixel offset of output phase `i` relative to its low resolution pixel,
/// for half-pixel-centred sampling.
pub fn phase_offset(i: usize, scale: usize) -> f64 {
    (i as f64 + 0.5) / scale as f64 - 0.5
}

/// One-dimensional taps of phase `i` over low resolution offsets −2..=2.
pub fn phase_taps(i: usize, scale: usize) -> [f64; PHASE_TAPS] {
    let d = phase_offset(i, scale);
    std::array::from_fn(|a| keys(d + 2.0 - a as f64))
}

/// The s² efficient 5×5 filters, channel `i·s + j` for output phase (i, j).
/// Each is the outer product of the vertical and horizontal phase taps.
pub fn efficient_filters<T: Scalar>(scale: usize) -> ConvWeights<T> {
    let taps: Vec<[f64; PHASE_TAPS]> = (0..scale).map(|i| phase_taps(i, scale)).collect();
    ConvWeights::from_fn(scale * scale, 1, PHASE_TAPS, PHASE_TAPS, |o, _, a, b| {
        T::of(taps[o / scale][a] * taps[o % scale][b])
    })
}

/// Border extension applied before the efficient filters.
pub fn upscale_padding() -> Padding {
    Padding::uniform(PHASE_TAPS / 2)
}

/// Anti-aliasing taps for downscaling by `scale`: the cubic kernel stretched by
/// `scale` with amplitude 1/`scale`, length 4·scale, starting ⌊3·scale/2⌋ samples
/// before `scale·x`.
pub fn downscale_taps(scale: usize) -> Vec<f64> {
    let s = scale as f64;
    let start = -((3 * scale / 2) as isize);
    let centre = (s - 1.0) / 2.0;
    (0..4 * scale)
        .map(|m| {
            let j = start + m as isize;
            keys((j as f64 - centre) / s) / s
        })
        .collect()
}

pub fn downscale_filter<T: Scalar>(scale: usize) -> ConvWeights<T> {
    let taps = downscale_taps(scale);
    let n = taps.len();
    ConvWeights::from_fn(1, 1, n, n, |_, _, y, x| T::of(taps[y] * taps[x]))
}

/// Mirror padding that makes a stride-`scale` pass of [`downscale_filter`]
/// produce exactly `h / scale` rows.
pub fn downscale_padding(scale: usize) -> Padding {
    let before = 3 * scale / 2;
    let after = 3 * scale - before;
    Padding {
        top: before,
        bottom: after,
        left: before,
        right: after,
    }
}
