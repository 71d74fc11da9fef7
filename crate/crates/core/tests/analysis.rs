mod common;

use common::*;
use esr_core::analysis::{filter_banks, pearson_corr_matrix, role_bank, spectrum, Role, DEFAULT_KAISER_BETA};
use esr_core::models::{bicubic_bank, init_weights, Arch, ModelSpec};
use esr_core::Error;

#[test]
fn bicubic_reconstructs_to_separable_symmetric_kernel() {
    for s in 2..=4 {
        let bank = role_bank(&bicubic_bank(s).unwrap(), Role::Upscaling).unwrap();
        assert_eq!(bank.len(), 1);
        let f = &bank.filters;
        let (kh, kw) = (f.kh(), f.kw());
        let flat = bank.flat(0);
        let total: f64 = flat.iter().sum();
        assert!((total - (s * s) as f64).abs() < 1e-5, "s{s} gain {total}");
        let peak = flat.iter().cloned().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let (py, px) = (peak / kw, peak % kw);
        let centre = flat[peak];
        let row: Vec<f64> = (0..kw).map(|x| flat[py * kw + x] / centre.sqrt()).collect();
        let col: Vec<f64> = (0..kh).map(|y| flat[y * kw + px] / centre.sqrt()).collect();
        for y in 0..kh {
            for x in 0..kw {
                assert!((flat[y * kw + x] - col[y] * row[x]).abs() < 1e-6, "s{s} not separable");
            }
        }
        assert!((row.iter().sum::<f64>() - s as f64).abs() < 1e-5);
        let support: Vec<f64> = row.iter().cloned().filter(|v| v.abs() > 1e-9).collect();
        let mirrored: Vec<f64> = support.iter().rev().cloned().collect();
        assert!(max_abs_diff(&support, &mirrored) < 1e-6, "s{s} profile {support:?}");
        assert!(support.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }
}

#[test]
fn reconstructed_size_is_kernel_times_scale() {
    let bank = init_weights(&ModelSpec::single_layer(Arch::EsrTr, 3, 7, 4), 0).unwrap();
    let banks = filter_banks(&bank).unwrap();
    assert_eq!(banks.iter().map(|b| b.role).collect::<Vec<_>>(), [Role::Query, Role::Key, Role::Value]);
    for b in banks {
        assert_eq!((b.len(), b.filters.kh(), b.filters.kw()), (4, 21, 21));
    }
}

#[test]
fn roles_follow_architecture() {
    let tm = init_weights(&ModelSpec::single_layer(Arch::EsrTm, 2, 5, 3), 1).unwrap();
    let matching = role_bank(&tm, Role::Matching).unwrap();
    let upscaling = role_bank(&tm, Role::Upscaling).unwrap();
    let corr = pearson_corr_matrix(&matching, &upscaling).unwrap();
    assert_eq!((corr.len(), corr[0].len()), (3, 3));
    assert!(corr.iter().flatten().all(|c| c.is_some_and(|v| v.abs() <= 1.0)));
    let self_corr = pearson_corr_matrix(&upscaling, &upscaling).unwrap();
    for (i, row) in self_corr.iter().enumerate() {
        assert!((row[i].unwrap() - 1.0).abs() < 1e-12);
    }
    assert!(matches!(role_bank(&tm, Role::Query), Err(Error::RoleUnavailable(_))));
    let max = init_weights(&ModelSpec::single_layer(Arch::EsrMax, 2, 3, 2), 1).unwrap();
    assert!(matches!(role_bank(&max, Role::Matching), Err(Error::RoleUnavailable(_))));
}

#[test]
fn spectrum_of_random_filter_is_nonnegative_and_sized() {
    let mut r = rng(8);
    let w = random_weights(&mut r, 1, 1, 9, 9);
    let coeffs: Vec<f64> = w.data().iter().map(|&v| v as f64).collect();
    let (mag, n) = spectrum(&coeffs, 9, 9, DEFAULT_KAISER_BETA).unwrap();
    assert_eq!(n, 64);
    assert_eq!(mag.len(), 64 * 64);
    assert!(mag.iter().all(|&v| v >= 0.0 && v.is_finite()));
}
