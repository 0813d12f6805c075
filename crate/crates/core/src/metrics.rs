//! Image quality metrics: MAE, PSNR, DSSIM, and their transparency-masked
//! variants T.MAE / T.PSNR (restricted to pixels whose primary ray crosses
//! a transparent surface).
//!
//! PSNR and DSSIM clamp inputs to [0, 1] (peak 1 on linear images); MAE is
//! the raw mean absolute difference. All accumulation is in f64. This
//! implementation is independent of the differentiable losses in the
//! tensor engine; tests hold both against the same brute-force oracles.

use serde::{Deserialize, Serialize};

use crate::image::{CoverageMask, RadianceImage};

/// Mean absolute difference over all pixels and channels.
pub fn mae(a: &RadianceImage, b: &RadianceImage) -> f64 {
    a.mean_abs_diff(b)
}

/// Peak signal-to-noise ratio with peak 1.0 over [0,1]-clamped images.
/// Identical images give +infinity (serialized as the string "inf").
pub fn psnr(a: &RadianceImage, b: &RadianceImage) -> f64 {
    assert_eq!(a.width, b.width);
    assert_eq!(a.height, b.height);
    let mut se = 0.0f64;
    let n = (a.pixels.len() * 3) as f64;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            let d = (pa[c].clamp(0.0, 1.0) - pb[c].clamp(0.0, 1.0)) as f64;
            se += d * d;
        }
    }
    let mse = se / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// MAE over covered pixels only.
pub fn masked_mae(a: &RadianceImage, b: &RadianceImage, mask: &CoverageMask) -> f64 {
    assert_eq!(a.pixels.len(), mask.mask.len());
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((pa, pb), &m) in a.pixels.iter().zip(&b.pixels).zip(&mask.mask) {
        if m {
            for c in 0..3 {
                sum += (pa[c] - pb[c]).abs() as f64;
            }
            count += 3;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// PSNR over covered pixels only (peak 1.0, clamped inputs). All-identical
/// covered regions (or an empty mask) give +infinity.
pub fn masked_psnr(a: &RadianceImage, b: &RadianceImage, mask: &CoverageMask) -> f64 {
    assert_eq!(a.pixels.len(), mask.mask.len());
    let mut se = 0.0f64;
    let mut count = 0usize;
    for ((pa, pb), &m) in a.pixels.iter().zip(&b.pixels).zip(&mask.mask) {
        if m {
            for c in 0..3 {
                let d = (pa[c].clamp(0.0, 1.0) - pb[c].clamp(0.0, 1.0)) as f64;
                se += d * d;
            }
            count += 3;
        }
    }
    if count == 0 || se == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (count as f64 / se).log10()
}

/// Structural dissimilarity (1 - SSIM) / 2 with the standard 11x11
/// Gaussian window (sigma 1.5), C1 = 1e-4, C2 = 9e-4, inputs clamped to
/// [0, 1], windows fully inside the image. Requires at least 11x11 pixels.
pub fn dssim(a: &RadianceImage, b: &RadianceImage) -> f64 {
    (1.0 - ssim(a, b)) / 2.0
}

pub fn ssim(a: &RadianceImage, b: &RadianceImage) -> f64 {
    assert_eq!(a.width, b.width);
    assert_eq!(a.height, b.height);
    assert!(
        a.width >= 11 && a.height >= 11,
        "spatial extent too small for an 11x11 SSIM window"
    );
    const C1: f64 = 1e-4;
    const C2: f64 = 9e-4;
    let kernel = gaussian_11();
    let (w, h) = (a.width, a.height);

    let mut total = 0.0f64;
    let mut count = 0usize;
    for c in 0..3 {
        let xa: Vec<f64> = a
            .pixels
            .iter()
            .map(|p| p[c].clamp(0.0, 1.0) as f64)
            .collect();
        let xb: Vec<f64> = b
            .pixels
            .iter()
            .map(|p| p[c].clamp(0.0, 1.0) as f64)
            .collect();
        let mu_a = blur(&xa, w, h, &kernel);
        let mu_b = blur(&xb, w, h, &kernel);
        let aa = blur(&mul(&xa, &xa), w, h, &kernel);
        let bb = blur(&mul(&xb, &xb), w, h, &kernel);
        let ab = blur(&mul(&xa, &xb), w, h, &kernel);
        for y in 5..h - 5 {
            for x in 5..w - 5 {
                let i = y * w + x;
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = aa[i] - ma * ma;
                let vb = bb[i] - mb * mb;
                let cov = ab[i] - ma * mb;
                let s = ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                    / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                total += s;
                count += 1;
            }
        }
    }
    total / count as f64
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn gaussian_11() -> [f64; 11] {
    let sigma = 1.5f64;
    let mut k = [0.0; 11];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-(d * d) / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn blur(x: &[f64], w: usize, h: usize, kernel: &[f64; 11]) -> Vec<f64> {
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        for px in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = px as isize + ki as isize - 5;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * x[y * w + sx as usize];
                }
            }
            tmp[y * w + px] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for px in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = y as isize + ki as isize - 5;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * tmp[sy as usize * w + px];
                }
            }
            out[y * w + px] = acc;
        }
    }
    out
}

/// One row of metric values; infinities serialize as the string "inf".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub mae: f64,
    #[serde(with = "inf_sentinel")]
    pub psnr: f64,
    pub dssim: f64,
    pub t_mae: f64,
    #[serde(with = "inf_sentinel")]
    pub t_psnr: f64,
}

/// Per-image and aggregate metrics over a dataset split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub image_count: usize,
    pub config_hash: String,
    pub aggregate: MetricRow,
    pub per_image: Vec<MetricRow>,
    /// LPIPS needs a pretrained perceptual network and is not computed.
    pub lpips: Option<f64>,
    pub lpips_note: String,
}

impl MetricsReport {
    pub fn from_rows(per_image: Vec<MetricRow>, config_hash: String) -> Self {
        let n = per_image.len().max(1) as f64;
        let mean = |f: fn(&MetricRow) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Self {
            image_count: per_image.len(),
            config_hash,
            aggregate: MetricRow {
                mae: mean(|r| r.mae),
                psnr: mean(|r| r.psnr),
                dssim: mean(|r| r.dssim),
                t_mae: mean(|r| r.t_mae),
                t_psnr: mean(|r| r.t_psnr),
            },
            per_image,
            lpips: None,
            lpips_note: "LPIPS requires a pretrained perceptual network; not computed".into(),
        }
    }
}

/// Compute the full row for one prediction/truth pair.
pub fn metric_row(pred: &RadianceImage, truth: &RadianceImage, mask: &CoverageMask) -> MetricRow {
    MetricRow {
        mae: mae(pred, truth),
        psnr: psnr(pred, truth),
        dssim: dssim(pred, truth),
        t_mae: masked_mae(pred, truth, mask),
        t_psnr: masked_psnr(pred, truth, mask),
    }
}

/// Serialize f64 with infinities as the string "inf" (JSON has no inf).
mod inf_sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            "inf".serialize(s)
        } else {
            v.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(#[allow(dead_code)] String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(_) => f64::INFINITY,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, v: f32) -> RadianceImage {
        RadianceImage::filled(w, h, [v, v, v])
    }

    #[test]
    fn psnr_of_constant_offset_is_exact() {
        // 0.1 offset on a [0,1] image: PSNR = 20 log10(1/0.1) = 20 dB,
        // up to the f32 representation of the offset itself.
        let a = constant(16, 16, 0.0);
        let b = constant(16, 16, 0.1);
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-6);
        assert!((mae(&a, &b) - 0.1).abs() < 1e-7);
    }

    #[test]
    fn identical_images_hit_sentinels() {
        let a = constant(16, 16, 0.3);
        assert_eq!(mae(&a, &a), 0.0);
        assert!(psnr(&a, &a).is_infinite());
        assert!(dssim(&a, &a).abs() < 1e-12);
    }

    #[test]
    fn masked_metrics_restrict_to_coverage() {
        let mut a = constant(8, 8, 0.2);
        let b = constant(8, 8, 0.2);
        let mut mask = CoverageMask::new(8, 8);
        // Left half covered with error 0.3, right half differs by 0.1 but
        // is not covered.
        for y in 0..8 {
            for x in 0..4 {
                mask.set(x, y, true);
                a.pixel_mut(x, y)[0] = 0.5;
                a.pixel_mut(x, y)[1] = 0.5;
                a.pixel_mut(x, y)[2] = 0.5;
            }
            for x in 4..8 {
                a.pixel_mut(x, y)[0] = 0.3;
                a.pixel_mut(x, y)[1] = 0.3;
                a.pixel_mut(x, y)[2] = 0.3;
            }
        }
        assert!((masked_mae(&a, &b, &mask) - 0.3).abs() < 1e-6);
        let expected_psnr = 10.0 * (1.0f64 / (0.3 * 0.3)).log10();
        assert!((masked_psnr(&a, &b, &mask) - expected_psnr).abs() < 1e-5);
    }

    #[test]
    fn inf_serializes_as_string() {
        let row = MetricRow {
            mae: 0.0,
            psnr: f64::INFINITY,
            dssim: 0.0,
            t_mae: 0.0,
            t_psnr: 12.5,
        };
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains("\"inf\""), "{json}");
        let back: MetricRow = serde_json::from_str(&json).unwrap();
        assert!(back.psnr.is_infinite());
        assert_eq!(back.t_psnr, 12.5);
    }
}
