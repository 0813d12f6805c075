//! Training losses: mean absolute error and windowed SSIM / DSSIM, both
//! composed from primitive tape ops so their gradients come from the tape.

use std::rc::Rc;

use super::{AutodiffError, Tape, Var};

/// Mean absolute difference.
pub fn l1_loss(tape: &Tape, pred: Var, target: Var) -> Result<Var, AutodiffError> {
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff)?;
    tape.mean(abs)
}

/// Normalized 1D Gaussian taps for the SSIM window.
pub fn gaussian_kernel_1d(size: usize, sigma: f32) -> Vec<f32> {
    let half = (size / 2) as f32;
    let mut k: Vec<f32> = (0..size)
        .map(|i| {
            let d = i as f32 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f32 = 1.5;
// Dynamic range L = 1: inputs are clamped to [0, 1] for the metric.
const C1: f32 = 0.01 * 0.01;
const C2: f32 = 0.03 * 0.03;

/// Mean structural similarity over an 11x11 Gaussian window (sigma 1.5),
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 1; inputs are clamped to
/// [0, 1]. Only windows fully inside the image count (a five-pixel border
/// is cropped), so the spatial extent must be at least 11x11.
pub fn ssim(tape: &Tape, pred: Var, target: Var) -> Result<Var, AutodiffError> {
    {
        let shape = tape.shape_of(pred);
        let other = tape.shape_of(target);
        if shape != other {
            return Err(AutodiffError::ShapeMismatch {
                op: "ssim",
                lhs: shape,
                rhs: other,
            });
        }
        if shape.len() != 3 || shape[1] < SSIM_WINDOW || shape[2] < SSIM_WINDOW {
            return Err(AutodiffError::BadShape {
                op: "ssim",
                shape,
                reason: "spatial extent too small for an 11x11 window",
            });
        }
    }
    let kernel = Rc::new(gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA));
    let blur = |v: Var| tape.depthwise_fixed(v, Rc::clone(&kernel));

    let x = tape.clamp01(pred)?;
    let y = tape.clamp01(target)?;

    let mu_x = blur(x)?;
    let mu_y = blur(y)?;
    let xx = tape.mul(x, x)?;
    let yy = tape.mul(y, y)?;
    let xy = tape.mul(x, y)?;
    let mu_xx = tape.mul(mu_x, mu_x)?;
    let mu_yy = tape.mul(mu_y, mu_y)?;
    let mu_xy = tape.mul(mu_x, mu_y)?;
    let sigma_x = tape.sub(blur(xx)?, mu_xx)?;
    let sigma_y = tape.sub(blur(yy)?, mu_yy)?;
    let sigma_xy = tape.sub(blur(xy)?, mu_xy)?;

    // ((2 mu_x mu_y + C1)(2 sigma_xy + C2)) /
    // ((mu_x^2 + mu_y^2 + C1)(sigma_x^2 + sigma_y^2 + C2))
    let num_l = tape.affine(mu_xy, 2.0, C1)?;
    let num_r = tape.affine(sigma_xy, 2.0, C2)?;
    let num = tape.mul(num_l, num_r)?;
    let den_l = tape.affine(tape.add(mu_xx, mu_yy)?, 1.0, C1)?;
    let den_r = tape.affine(tape.add(sigma_x, sigma_y)?, 1.0, C2)?;
    let den = tape.mul(den_l, den_r)?;
    let map = tape.div(num, den)?;

    let valid = tape.crop_border(map, SSIM_WINDOW / 2)?;
    tape.mean(valid)
}

/// Structural dissimilarity (1 - ssim) / 2.
pub fn dssim(tape: &Tape, pred: Var, target: Var) -> Result<Var, AutodiffError> {
    let s = ssim(tape, pred, target)?;
    tape.affine(s, -0.5, 0.5)
}

/// lambda * L1 + (1 - lambda) * DSSIM.
pub fn combined_loss(
    tape: &Tape,
    pred: Var,
    target: Var,
    lambda: f32,
) -> Result<Var, AutodiffError> {
    if lambda >= 1.0 {
        return l1_loss(tape, pred, target);
    }
    let d = tape.scalar_mul(dssim(tape, pred, target)?, 1.0 - lambda)?;
    if lambda <= 0.0 {
        return Ok(d);
    }
    let l1 = tape.scalar_mul(l1_loss(tape, pred, target)?, lambda)?;
    tape.add(l1, d)
}
