//! Finite-difference verification of every differentiable op and loss,
//! plus the end-to-end model gradient at 16x16.

mod common;

use std::rc::Rc;

use common::{finite_diff_check, rand_tensor, rand_tensor_away_from_zero};
use glassbuf_core::autodiff::{
    combined_loss, gaussian_kernel_1d, l1_loss, ssim, Tape, Tensor, Var,
};
use glassbuf_core::glassnet::{
    collect_grads, forward_train, register_params, GlassNetConfig, GlassNetParams,
};
use glassbuf_core::raster::synthetic_stack;
use glassbuf_core::rng::SplitMix64;

const TOL: f64 = 1e-3;

/// Reduce any output to a scalar via a fixed random weighting so the whole
/// Jacobian is exercised, not just the sum of rows.
fn weighted_sum(tape: &Tape, out: Var, seed: u64) -> Var {
    let shape = tape.shape_of(out);
    let weights = tape.leaf(rand_tensor(&shape, seed, -1.0, 1.0), false);
    let prod = tape.mul(out, weights).unwrap();
    tape.sum_reduce(prod).unwrap()
}

#[test]
fn elementwise_ops() {
    let a = rand_tensor(&[3, 6, 5], 1, -1.0, 1.0);
    let b = rand_tensor_away_from_zero(&[3, 6, 5], 2);

    for (name, builder) in [
        ("add", 0usize),
        ("sub", 1),
        ("mul", 2),
        ("div", 3),
        ("affine", 4),
    ] {
        let err = finite_diff_check(
            &[a.clone(), b.clone()],
            move |tape, vars| {
                let out = match builder {
                    0 => tape.add(vars[0], vars[1]).unwrap(),
                    1 => tape.sub(vars[0], vars[1]).unwrap(),
                    2 => tape.mul(vars[0], vars[1]).unwrap(),
                    3 => tape.div(vars[0], vars[1]).unwrap(),
                    _ => tape.affine(vars[0], 1.7, -0.3).unwrap(),
                };
                weighted_sum(tape, out, 99)
            },
            20,
            10 + builder as u64,
        );
        assert!(err < TOL, "{name}: max rel err {err}");
    }
}

#[test]
fn activation_ops() {
    // Inputs bounded away from the kinks at 0 (and clamp bounds).
    let x = rand_tensor_away_from_zero(&[2, 5, 5], 3);
    for (name, which) in [
        ("leaky_relu", 0usize),
        ("softplus", 1),
        ("abs", 2),
    ] {
        let err = finite_diff_check(
            &[x.clone()],
            move |tape, vars| {
                let out = match which {
                    0 => tape.leaky_relu(vars[0], 0.2).unwrap(),
                    1 => tape.softplus(vars[0]).unwrap(),
                    _ => tape.abs(vars[0]).unwrap(),
                };
                weighted_sum(tape, out, 100)
            },
            25,
            20 + which as u64,
        );
        assert!(err < TOL, "{name}: max rel err {err}");
    }

    // clamp01 probed strictly inside (0, 1).
    let inside = rand_tensor(&[2, 4, 4], 5, 0.1, 0.9);
    let err = finite_diff_check(
        &[inside],
        |tape, vars| {
            let out = tape.clamp01(vars[0]).unwrap();
            weighted_sum(tape, out, 101)
        },
        25,
        23,
    );
    assert!(err < TOL, "clamp01: max rel err {err}");
}

#[test]
fn conv_ops() {
    for k in [1usize, 3] {
        let x = rand_tensor(&[3, 6, 6], 30 + k as u64, -1.0, 1.0);
        let w = rand_tensor(&[4, 3, k, k], 31 + k as u64, -0.5, 0.5);
        let b = rand_tensor(&[4], 32 + k as u64, -0.2, 0.2);
        let err = finite_diff_check(
            &[x, w, b],
            |tape, vars| {
                let out = tape.conv2d(vars[0], vars[1], vars[2]).unwrap();
                weighted_sum(tape, out, 102)
            },
            20,
            33 + k as u64,
        );
        assert!(err < TOL, "conv2d k={k}: max rel err {err}");
    }
}

#[test]
fn dense_op() {
    let x = rand_tensor(&[5, 7], 40, -1.0, 1.0);
    let w = rand_tensor(&[7, 4], 41, -0.5, 0.5);
    let b = rand_tensor(&[4], 42, -0.2, 0.2);
    let err = finite_diff_check(
        &[x, w, b],
        |tape, vars| {
            let out = tape.dense(vars[0], vars[1], vars[2]).unwrap();
            weighted_sum(tape, out, 103)
        },
        20,
        43,
    );
    assert!(err < TOL, "dense: max rel err {err}");
}

#[test]
fn structural_ops() {
    // Max pool probed on well-separated values so no ties flip under h.
    let mut rng = SplitMix64::new(50);
    let n = 2 * 6 * 6;
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.1).collect();
    for i in (1..n).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        vals.swap(i, j);
    }
    let pool_in = Tensor::from_vec(&[2, 6, 6], vals);
    let err = finite_diff_check(
        &[pool_in],
        |tape, vars| {
            let out = tape.max_pool2(vars[0]).unwrap();
            weighted_sum(tape, out, 104)
        },
        20,
        51,
    );
    assert!(err < TOL, "max_pool2: max rel err {err}");

    let x = rand_tensor(&[2, 4, 5], 52, -1.0, 1.0);
    let err = finite_diff_check(
        &[x],
        |tape, vars| {
            let out = tape.upsample2(vars[0]).unwrap();
            weighted_sum(tape, out, 105)
        },
        20,
        53,
    );
    assert!(err < TOL, "nearest_upsample2: max rel err {err}");

    let a = rand_tensor(&[2, 4, 4], 54, -1.0, 1.0);
    let b = rand_tensor(&[3, 4, 4], 55, -1.0, 1.0);
    let err = finite_diff_check(
        &[a, b],
        |tape, vars| {
            let out = tape.concat_c(vars[0], vars[1]).unwrap();
            weighted_sum(tape, out, 106)
        },
        20,
        56,
    );
    assert!(err < TOL, "concat: max rel err {err}");

    let x = rand_tensor(&[3, 3, 3], 57, -1.0, 1.0);
    let err = finite_diff_check(
        &[x],
        |tape, vars| tape.sum_reduce(vars[0]).unwrap(),
        0,
        58,
    );
    assert!(err < TOL, "sum_reduce: max rel err {err}");

    let x = rand_tensor(&[2, 13, 13], 59, -1.0, 1.0);
    let kernel = Rc::new(gaussian_kernel_1d(11, 1.5));
    let err = finite_diff_check(
        &[x],
        move |tape, vars| {
            let out = tape.depthwise_fixed(vars[0], Rc::clone(&kernel)).unwrap();
            weighted_sum(tape, out, 107)
        },
        20,
        60,
    );
    assert!(err < TOL, "depthwise_fixed: max rel err {err}");

    let x = rand_tensor(&[2, 8, 8], 61, -1.0, 1.0);
    let err = finite_diff_check(
        &[x],
        |tape, vars| {
            let out = tape.crop_border(vars[0], 2).unwrap();
            weighted_sum(tape, out, 108)
        },
        20,
        62,
    );
    assert!(err < TOL, "crop_border: max rel err {err}");
}

#[test]
fn loss_gradients() {
    // Pred/target pairs kept away from |pred - target| = 0 kinks and away
    // from the clamp bounds inside SSIM.
    let pred = rand_tensor(&[3, 14, 14], 70, 0.15, 0.45);
    let target = rand_tensor(&[3, 14, 14], 71, 0.55, 0.85);

    let err = finite_diff_check(
        &[pred.clone(), target.clone()],
        |tape, vars| l1_loss(tape, vars[0], vars[1]).unwrap(),
        30,
        72,
    );
    assert!(err < TOL, "l1_loss: max rel err {err}");

    let err = finite_diff_check(
        &[pred.clone(), target.clone()],
        |tape, vars| ssim(tape, vars[0], vars[1]).unwrap(),
        30,
        73,
    );
    assert!(err < TOL, "ssim: max rel err {err}");

    let err = finite_diff_check(
        &[pred, target],
        |tape, vars| combined_loss(tape, vars[0], vars[1], 0.5).unwrap(),
        30,
        74,
    );
    assert!(err < TOL, "combined_loss: max rel err {err}");
}

/// End-to-end gradient of the full model on a 16x16 crop with t = 2:
/// backprop vs finite differences on a random subset of parameters.
#[test]
fn end_to_end_model_gradient() {
    let config = GlassNetConfig::default();
    let params = GlassNetParams::init(config);
    let stack = synthetic_stack(16, 16, 2, 1234);
    let truth = rand_tensor(&[3, 16, 16], 75, 0.0, 1.0);

    // Analytic gradients once.
    let tape = Tape::new();
    let reg = register_params(&tape, &params, true, false);
    let pred = forward_train(&tape, &params, &reg, &stack).unwrap();
    let truth_var = tape.leaf(truth.clone(), false);
    let loss = l1_loss(&tape, pred, truth_var).unwrap();
    tape.backward(loss).unwrap();
    let grads = collect_grads(&tape, &params, &reg);

    let eval_loss = |p: &GlassNetParams| -> f64 {
        let tape = Tape::new();
        let reg = register_params(&tape, p, false, false);
        let pred = forward_train(&tape, p, &reg, &stack).unwrap();
        let truth_var = tape.leaf(truth.clone(), false);
        let loss = l1_loss(&tape, pred, truth_var).unwrap();
        tape.value_of(loss).data()[0] as f64
    };

    // 32 random (parameter tensor, element) probes across the main model
    // (the supersampler is not part of this graph).
    let named = params.named_tensors();
    let main_count = named.len() - 6;
    let mut rng = SplitMix64::new(76);
    let h = 1e-3f64;
    let mut worst = 0.0f64;
    for _ in 0..32 {
        let ti = rng.next_below(main_count as u64) as usize;
        let ei = rng.next_below(named[ti].1.len() as u64) as usize;

        let mut plus = params.clone();
        plus.tensors_mut()[ti].data_mut()[ei] += h as f32;
        let mut minus = params.clone();
        minus.tensors_mut()[ti].data_mut()[ei] -= h as f32;
        let fd = (eval_loss(&plus) - eval_loss(&minus)) / (2.0 * h);
        let analytic = grads[ti].data()[ei] as f64;
        let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1.0);
        if err > worst {
            worst = err;
        }
    }
    assert!(worst < 1e-2, "end-to-end max rel err {worst}");
}
