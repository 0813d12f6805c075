//! Checkpoint evaluation over a dataset split and single-view rendering.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{load_sample, DatasetManifest, Split};
use super::{io_err, HarnessError};
use crate::camera::Camera;
use crate::glassnet::{forward_full, load_checkpoint, supersample};
use crate::image::RadianceImage;
use crate::metrics::{metric_row, MetricsReport};
use crate::pathtrace::{TraceOptions, Tracer};
use crate::raster::rasterize_with;
use crate::rng::hash64;
use crate::scene::{load_scene, sample_instance};

/// Render every view of the split through the model and score it against
/// the stored ground truth. Never writes into the dataset directory.
pub fn evaluate(
    checkpoint: &Path,
    dataset_dir: &Path,
    split: Split,
) -> Result<MetricsReport, HarnessError> {
    let (params, meta) = load_checkpoint(checkpoint)?;
    let manifest = DatasetManifest::load(dataset_dir)?;
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(HarnessError::Dataset(format!(
            "split {} is empty",
            split.name()
        )));
    }

    let rows: Result<Vec<_>, HarnessError> = entries
        .par_iter()
        .map(|entry| {
            let sample = load_sample(dataset_dir, entry)?;
            let pred = forward_full(&params, &sample.stack);
            if meta.supersample {
                let (hires_stack, hires_gt) = sample.hires.as_ref().ok_or_else(|| {
                    HarnessError::Dataset(format!(
                        "{}: checkpoint expects supersampling but the sample has no hires data",
                        entry.dir
                    ))
                })?;
                let up = supersample(&params, &pred, &hires_stack.gbuffer);
                if up.width != hires_gt.width || up.height != hires_gt.height {
                    return Err(HarnessError::Dataset(format!(
                        "{}: prediction {}x{} vs ground truth {}x{}",
                        entry.dir, up.width, up.height, hires_gt.width, hires_gt.height
                    )));
                }
                // The base-resolution coverage mask upsamples exactly 2x.
                let mut mask = crate::image::CoverageMask::new(up.width, up.height);
                for y in 0..up.height {
                    for x in 0..up.width {
                        mask.set(x, y, sample.coverage.get(x / 2, y / 2));
                    }
                }
                Ok(metric_row(&up, hires_gt, &mask))
            } else {
                if pred.width != sample.truth.width || pred.height != sample.truth.height {
                    return Err(HarnessError::Dataset(format!(
                        "{}: prediction {}x{} vs ground truth {}x{}",
                        entry.dir, pred.width, pred.height, sample.truth.width, sample.truth.height
                    )));
                }
                Ok(metric_row(&pred, &sample.truth, &sample.coverage))
            }
        })
        .collect();

    Ok(MetricsReport::from_rows(rows?, manifest.config_hash))
}

#[derive(Debug, Serialize)]
pub struct RenderOutputs {
    pub prediction_pfm: PathBuf,
    pub prediction_png: PathBuf,
    pub ground_truth_pfm: Option<PathBuf>,
    pub difference_png: Option<PathBuf>,
    pub metrics_json: Option<PathBuf>,
}

/// Render one view of a scene through a checkpoint. With `spp > 0` the
/// path-traced truth, the absolute-difference image, and a metrics JSON are
/// written too; `spp = 0` skips them.
pub fn render_view(
    checkpoint: &Path,
    scene_path: &Path,
    seed: u64,
    spp: u32,
    out_dir: &Path,
) -> Result<RenderOutputs, HarnessError> {
    let (params, meta) = load_checkpoint(checkpoint)?;
    let (width, height) = meta.resolution;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let scene = std::sync::Arc::new(load_scene(scene_path)?);
    let instance = sample_instance(&scene, seed);
    let render_scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    let tracer = Tracer::new(&render_scene);

    let stack = rasterize_with(&render_scene, &tracer, &camera, width, height);
    let mut pred = forward_full(&params, &stack);
    if meta.supersample {
        let hires = rasterize_with(&render_scene, &tracer, &camera, width * 2, height * 2);
        pred = supersample(&params, &pred, &hires.gbuffer);
    }

    let prediction_pfm = out_dir.join("prediction.pfm");
    let prediction_png = out_dir.join("prediction.png");
    pred.write_pfm(&prediction_pfm)?;
    pred.write_png_preview(&prediction_png)?;

    if spp == 0 {
        return Ok(RenderOutputs {
            prediction_pfm,
            prediction_png,
            ground_truth_pfm: None,
            difference_png: None,
            metrics_json: None,
        });
    }

    let (gt_w, gt_h) = (pred.width, pred.height);
    let opts = TraceOptions {
        spp,
        seed: hash64(&[seed, 0x6774]),
        ..TraceOptions::default()
    };
    let truth = tracer.trace_image(&camera, gt_w, gt_h, opts);
    let coverage = tracer.trace_coverage(&camera, gt_w, gt_h);

    let gt_pfm = out_dir.join("ground_truth.pfm");
    truth.write_pfm(&gt_pfm)?;
    truth.write_png_preview(&out_dir.join("ground_truth.png"))?;

    let mut diff = RadianceImage::new(gt_w, gt_h);
    for (d, (p, t)) in diff.pixels.iter_mut().zip(pred.pixels.iter().zip(&truth.pixels)) {
        for c in 0..3 {
            d[c] = (p[c] - t[c]).abs();
        }
    }
    let diff_png = out_dir.join("difference.png");
    diff.write_png_preview(&diff_png)?;

    let row = metric_row(&pred, &truth, &coverage);
    let metrics_path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&row).expect("metrics serialization");
    std::fs::write(&metrics_path, json).map_err(|e| io_err(&metrics_path, e))?;

    Ok(RenderOutputs {
        prediction_pfm,
        prediction_png,
        ground_truth_pfm: Some(gt_pfm),
        difference_png: Some(diff_png),
        metrics_json: Some(metrics_path),
    })
}
