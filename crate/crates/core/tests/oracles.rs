mod common;

use common::*;
use esr_core::metrics::downscale_bicubic;
use esr_core::models::bicubic_bank;
use esr_core::tensor::{conv2d, conv2d_transposed, demultiplex_filter, pixel_shuffle};
use esr_core::Shape;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transposed_conv_matches_zero_insertion(seed in any::<u64>(), s in 2usize..5, kk in 0usize..3, c in 1usize..3) {
        let mut r = rng(seed);
        let k = 2 * kk + 1;
        let (h, w) = (3 + (seed % 5) as usize, 3 + (seed / 5 % 5) as usize);
        let x = random_tensor(&mut r, Shape::new(1, c, h, w), -1.0, 1.0);
        let big = random_weights(&mut r, 2, c, s * k, s * k);
        let engine = conv2d_transposed(&x, &big, s).unwrap();
        let split = pixel_shuffle(&conv2d(&x, &demultiplex_filter(&big, s).unwrap(), 1, kk).unwrap(), s).unwrap();
        let full_w = (w - 1) * s + s * k;
        let off = s * kk;
        for o in 0..2 {
            let mut naive = vec![0.0; ((h - 1) * s + s * k) * full_w];
            for i in 0..c {
                let part = naive_transposed(
                    &x.plane(0, i).iter().map(|&v| v as f64).collect::<Vec<_>>(), h, w,
                    &big.kernel(o, i).iter().map(|&v| v as f64).collect::<Vec<_>>(), s * k, s * k, s,
                );
                naive.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
            for y in 0..h * s {
                for xx in 0..w * s {
                    let want = naive[(y + off) * full_w + xx + off];
                    prop_assert!((engine.at(0, o, y, xx) as f64 - want).abs() < 1e-5);
                    prop_assert!((split.at(0, o, y, xx) as f64 - want).abs() < 1e-5);
                }
            }
        }
    }
}

#[test]
fn bicubic_upscale_matches_cubic_oracle_everywhere() {
    // both sides mirror the border the same way, so the whole image agrees
    let mut r = rng(21);
    for s in 2..=4 {
        let (h, w) = (11, 14);
        let x = random_tensor(&mut r, Shape::new(1, 1, h, w), 0.0, 255.0);
        let out = bicubic_bank(s).unwrap().forward(&x).unwrap();
        let oracle = cubic_upscale(&to_f64(&x), h, w, s);
        let d = max_abs_diff(&to_f64(&out), &oracle);
            assert!(d < 1e-4, "s={s} diff {d}");
    }
}

#[test]
fn bicubic_downscale_matches_cubic_oracle() {
    let mut r = rng(22);
    for s in 2..=4 {
        for _ in 0..5 {
            let (h, w) = (8 * s, 6 * s);
            let x = random_tensor(&mut r, Shape::new(1, 1, h, w), 0.0, 255.0);
            let out = downscale_bicubic(&x, s).unwrap();
            let oracle = cubic_downscale(&to_f64(&x), h, w, s);
            let d = max_abs_diff(&to_f64(&out), &oracle);
            assert!(d < 1e-4, "s={s} diff {d}");
        }
    }
}

#[test]
fn downscale_of_upscaled_constant_is_constant() {
    for s in 2..=4 {
        let x = esr_core::Tensor::full(Shape::new(1, 1, 7, 9), 77.0);
        let up = bicubic_bank(s).unwrap().forward(&x).unwrap();
        let down = downscale_bicubic(&up, s).unwrap();
        assert!(down.data().iter().all(|v| (v - 77.0).abs() < 1e-3));
    }
}
