//! Metric implementations against independent brute-force oracles on
//! random image pairs.

mod common;

use common::*;
use glassbuf_core::image::CoverageMask;
use glassbuf_core::metrics;

#[test]
fn metrics_match_oracles_on_random_pairs() {
    for seed in 0..20u64 {
        let a = random_radiance_image(24, 20, seed * 2 + 1, 0.0, 1.2);
        let b = random_radiance_image(24, 20, seed * 2 + 2, 0.0, 1.2);
        let mask = random_coverage_mask(24, 20, seed + 500);

        assert!((metrics::mae(&a, &b) - oracle_mae(&a, &b)).abs() < 1e-6);
        assert!((metrics::psnr(&a, &b) - oracle_psnr(&a, &b)).abs() < 1e-6);
        assert!(
            (metrics::dssim(&a, &b) - oracle_dssim(&a, &b)).abs() < 1e-4,
            "seed {seed}: {} vs {}",
            metrics::dssim(&a, &b),
            oracle_dssim(&a, &b)
        );
        assert!(
            (metrics::masked_mae(&a, &b, &mask) - oracle_masked_mae(&a, &b, &mask)).abs() < 1e-6
        );
        assert!(
            (metrics::masked_psnr(&a, &b, &mask) - oracle_masked_psnr(&a, &b, &mask)).abs() < 1e-6
        );
    }
}

/// T.MAE over a half-covered image equals plain MAE restricted to that
/// half.
#[test]
fn masked_mae_equals_restricted_mean() {
    let a = random_radiance_image(16, 16, 1, 0.0, 1.0);
    let b = random_radiance_image(16, 16, 2, 0.0, 1.0);
    let mut mask = CoverageMask::new(16, 16);
    for y in 0..16 {
        for x in 0..8 {
            mask.set(x, y, true);
        }
    }
    let restricted = {
        let mut sum = 0.0f64;
        let mut n = 0.0;
        for y in 0..16 {
            for x in 0..8 {
                for c in 0..3 {
                    sum += (a.pixel(x, y)[c] as f64 - b.pixel(x, y)[c] as f64).abs();
                    n += 1.0;
                }
            }
        }
        sum / n
    };
    assert!((metrics::masked_mae(&a, &b, &mask) - restricted).abs() < 1e-9);
}
