//! End-to-end training: Adam on the combined L1/DSSIM loss, batch shards on
//! concurrent tapes with ordered gradient merging, per-epoch validation,
//! best-validation checkpointing, and an optional supersampler phase.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{load_sample, DatasetManifest, LoadedSample, Split};
use super::{io_err, HarnessError, TrainConfig};
use crate::autodiff::{combined_loss, l1_loss, AdamHyper, AdamState, Tape, Tensor};
use crate::glassnet::{
    collect_grads, forward_full, forward_train, image_to_tensor, register_params,
    save_checkpoint, supersample_train, CheckpointMeta, GlassNetParams,
};
use crate::metrics;
use crate::rng::{hash64, SplitMix64};

#[derive(Debug, Serialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub steps: usize,
    pub final_train_loss: f64,
    pub best_val_loss: f64,
    pub best_val_step: usize,
}

#[derive(Debug, Serialize)]
struct LossCurve {
    train: Vec<(usize, f64)>,
    val: Vec<(usize, f64)>,
}

/// Train on a generated dataset and write the best-validation checkpoint to
/// `out_path` (the loss curve lands next to it). A non-finite batch loss
/// aborts with the offending step index.
pub fn train(
    config: &TrainConfig,
    dataset_dir: &Path,
    out_path: &Path,
) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let manifest = DatasetManifest::load(dataset_dir)?;
    let train_set = load_split(dataset_dir, &manifest, Split::Train)?;
    let val_set = load_split(dataset_dir, &manifest, Split::Val)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(HarnessError::Dataset(
            "dataset has an empty train or val split".into(),
        ));
    }

    let mut params = GlassNetParams::init(config.net_config());
    let names: Vec<String> = params
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut adam = AdamState::new(
        &params
            .named_tensors()
            .iter()
            .map(|(_, t)| (*t).clone())
            .collect::<Vec<_>>(),
        AdamHyper::new(config.lr, config.weight_decay),
    );

    let lambda = config.effective_lambda();
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let mut curve = LossCurve {
        train: Vec::new(),
        val: Vec::new(),
    };
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for step in 1..=config.max_steps {
        let mut rng = SplitMix64::new(hash64(&[config.seed, 0xb47c, step as u64]));
        let batch: Vec<usize> = (0..config.batch_size)
            .map(|_| rng.next_below(train_set.len() as u64) as usize)
            .collect();

        let shards: Vec<Result<(f64, Vec<Tensor>), HarnessError>> = batch
            .par_iter()
            .map(|&i| shard_backward(&params, &train_set[i], lambda))
            .collect();

        let mut grads: Option<Vec<Tensor>> = None;
        let mut loss_sum = 0.0f64;
        for shard in shards {
            let (loss, shard_grads) = shard?;
            loss_sum += loss;
            match &mut grads {
                None => grads = Some(shard_grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&shard_grads) {
                        for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                            *av += gv;
                        }
                    }
                }
            }
        }
        let mut grads = grads.expect("non-empty batch");
        let scale = 1.0 / config.batch_size as f32;
        for g in &mut grads {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
        let train_loss = loss_sum / config.batch_size as f64;
        if !train_loss.is_finite() {
            return Err(HarnessError::NonFiniteLoss { step });
        }
        curve.train.push((step, train_loss));

        adam.step(&mut params.tensors_mut(), &grads, |i| names[i].clone())?;

        if step % 100 == 0 || step == config.max_steps {
            eprintln!("step {step}/{}: train loss {train_loss:.5}", config.max_steps);
        }

        if step % steps_per_epoch == 0 || step == config.max_steps {
            let val_loss = validation_loss(&params, &val_set, lambda);
            curve.val.push((step, val_loss));
            eprintln!("step {step}: val loss {val_loss:.5}");
            if val_loss < best.0 {
                best = (val_loss, step, params.clone());
            }
        }
    }

    let (best_val_loss, best_val_step, mut best_params) = best;

    if config.supersample {
        train_supersampler(config, &mut best_params, &train_set)?;
    }

    let meta = CheckpointMeta {
        training_step: best_val_step as u64,
        lr: config.lr,
        weight_decay: config.weight_decay,
        lambda,
        resolution: (config.width, config.height),
        supersample: config.supersample,
        note: format!("config {}", config.hash()),
    };
    save_checkpoint(&best_params, &meta, out_path)?;

    let curve_path = out_path.with_extension("curve.json");
    let json = serde_json::to_string_pretty(&curve).expect("curve serialization");
    std::fs::write(&curve_path, json).map_err(|e| io_err(&curve_path, e))?;

    Ok(TrainOutcome {
        checkpoint: out_path.to_path_buf(),
        curve: curve_path,
        steps: config.max_steps,
        final_train_loss: curve.train.last().map(|(_, l)| *l).unwrap_or(f64::NAN),
        best_val_loss,
        best_val_step,
    })
}

fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<LoadedSample>, HarnessError> {
    manifest
        .split(split)
        .into_iter()
        .map(|entry| load_sample(dir, entry))
        .collect()
}

/// One batch shard: fresh tape, forward, loss, backward, ordered grads.
fn shard_backward(
    params: &GlassNetParams,
    sample: &LoadedSample,
    lambda: f32,
) -> Result<(f64, Vec<Tensor>), HarnessError> {
    let tape = Tape::new();
    let reg = register_params(&tape, params, true, false);
    let pred = forward_train(&tape, params, &reg, &sample.stack)?;
    let truth = tape.leaf(image_to_tensor(&sample.truth), false);
    let loss = combined_loss(&tape, pred, truth, lambda)?;
    let loss_value = tape.value_of(loss).data()[0] as f64;
    tape.backward(loss)?;
    Ok((loss_value, collect_grads(&tape, params, &reg)))
}

/// Validation combined loss via the inference path (no tape).
fn validation_loss(params: &GlassNetParams, val: &[LoadedSample], lambda: f32) -> f64 {
    let losses: Vec<f64> = val
        .par_iter()
        .map(|sample| {
            let pred = forward_full(params, &sample.stack);
            let l1 = metrics::mae(&pred, &sample.truth);
            if lambda >= 1.0 {
                l1
            } else {
                let d = metrics::dssim(&pred, &sample.truth);
                lambda as f64 * l1 + (1.0 - lambda as f64) * d
            }
        })
        .collect();
    losses.iter().sum::<f64>() / losses.len().max(1) as f64
}

/// Phase two: freeze the main network and fit the residual supersampler on
/// the hi-res pairs with an L1 objective.
fn train_supersampler(
    config: &TrainConfig,
    params: &mut GlassNetParams,
    train_set: &[LoadedSample],
) -> Result<(), HarnessError> {
    let with_hires: Vec<&LoadedSample> = train_set.iter().filter(|s| s.hires.is_some()).collect();
    if with_hires.is_empty() {
        return Err(HarnessError::Dataset(
            "supersample training requires a dataset generated with supersample = true".into(),
        ));
    }
    // Base predictions are fixed; compute them once.
    let bases: Vec<Tensor> = with_hires
        .par_iter()
        .map(|s| image_to_tensor(&forward_full(params, &s.stack)))
        .collect();

    let named = params.named_tensors();
    let total = named.len();
    let s_range = total - 6..total;
    let names: Vec<String> = named[s_range.clone()]
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let s_tensors: Vec<Tensor> = named[s_range.clone()]
        .iter()
        .map(|(_, t)| (*t).clone())
        .collect();
    drop(named);
    let mut adam = AdamState::new(&s_tensors, AdamHyper::new(config.lr, config.weight_decay));

    for step in 1..=config.super_steps {
        let mut rng = SplitMix64::new(hash64(&[config.seed, 0x5u64, step as u64]));
        let i = rng.next_below(with_hires.len() as u64) as usize;
        let sample = with_hires[i];
        let (hires_stack, hires_gt) = sample.hires.as_ref().expect("filtered");

        let tape = Tape::new();
        let reg = register_params(&tape, params, false, true);
        let pred = supersample_train(&tape, &reg, &bases[i], &hires_stack.gbuffer)?;
        let truth = tape.leaf(image_to_tensor(hires_gt), false);
        let loss = l1_loss(&tape, pred, truth)?;
        let loss_value = tape.value_of(loss).data()[0] as f64;
        if !loss_value.is_finite() {
            return Err(HarnessError::NonFiniteLoss { step });
        }
        tape.backward(loss)?;
        let grads = collect_grads(&tape, params, &reg);
        let s_grads: Vec<Tensor> = grads[s_range.clone()].to_vec();

        let mut tensors = params.tensors_mut();
        adam.step(&mut tensors[s_range.clone()], &s_grads, |i| names[i].clone())?;
        if step % 100 == 0 {
            eprintln!(
                "supersampler step {step}/{}: L1 {loss_value:.5}",
                config.super_steps
            );
        }
    }
    Ok(())
}
