//! End-to-end harness behavior at miniature scale: dataset determinism,
//! training descent, toggle contracts, and read-only evaluation.

mod common;

use std::path::Path;

use glassbuf_core::autodiff::{combined_loss, l1_loss, Tape};
use glassbuf_core::glassnet::{
    collect_grads, forward_train, image_to_tensor, register_params, GlassNetParams,
};
use glassbuf_core::harness::{
    dir_digest, evaluate, gen_dataset, load_sample, train, DatasetManifest, LossKind, Split,
    TrainConfig, Toggles,
};
use glassbuf_core::scene::fixtures::{write_preset, Preset};

fn tiny_config(scene: &Path, seed: u64) -> TrainConfig {
    TrainConfig {
        scene: scene.to_path_buf(),
        width: 16,
        height: 16,
        train_count: 4,
        val_count: 1,
        test_count: 2,
        spp: 8,
        lr: 2e-3,
        weight_decay: 0.0,
        lambda: 0.5,
        l_pe: 1,
        batch_size: 2,
        max_steps: 40,
        seed,
        toggles: Toggles::default(),
        supersample: false,
        unet_width: 6,
        h_width: 8,
        c_sigma: 8,
        c_tau: 8,
        c_phi: 8,
        super_steps: 10,
    }
}

#[test]
fn dataset_generation_is_bitwise_reproducible() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let config = tiny_config(&scene, 3);

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = gen_dataset(&config, d1.path()).unwrap();
    let m2 = gen_dataset(&config, d2.path()).unwrap();
    assert_eq!(m1.samples.len(), 4 + 1 + 2);
    assert_eq!(m1.config_hash, m2.config_hash);
    assert_eq!(
        dir_digest(d1.path()).unwrap(),
        dir_digest(d2.path()).unwrap(),
        "two runs of gen_dataset differ"
    );
}

#[test]
fn production_scale_split_is_accepted_by_schema() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    // A production-scale split (1800/200/128 at 8192 spp) must parse and
    // validate even though it is far beyond what runs here.
    let json = format!(
        r#"{{
            "scene": {scene:?},
            "train_count": 1800, "val_count": 200, "test_count": 128,
            "spp": 8192, "lr": 0.0001, "weight_decay": 0.00075
        }}"#
    );
    let path = scenes.path().join("big.json");
    std::fs::write(&path, json).unwrap();
    let config = TrainConfig::from_file(&path).unwrap();
    assert_eq!(config.train_count, 1800);
    assert_eq!(config.spp, 8192);
    assert_eq!(config.lr, 1e-4);
    assert_eq!(config.weight_decay, 7.5e-4);
    config.validate().unwrap();
}

#[test]
fn config_validation_rejects_nonsense() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let mut config = tiny_config(&scene, 0);
    config.lr = 0.0;
    assert!(config.validate().is_err());
    let mut config = tiny_config(&scene, 0);
    config.lambda = 1.5;
    assert!(config.validate().is_err());
    let mut config = tiny_config(&scene, 0);
    config.train_count = 0;
    assert!(config.validate().is_err());
    let mut config = tiny_config(&scene, 0);
    config.width = 30;
    assert!(config.validate().is_err());
}

/// Descent smoke test plus read-only evaluation and the identical-pair
/// sentinel metrics.
#[test]
fn train_descends_and_eval_is_read_only() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let config = tiny_config(&scene, 11);

    let data = tempfile::tempdir().unwrap();
    gen_dataset(&config, data.path()).unwrap();
    let digest_before = dir_digest(data.path()).unwrap();

    let out = tempfile::tempdir().unwrap();
    let ckpt = out.path().join("model.ckpt");
    let outcome = train(&config, data.path(), &ckpt).unwrap();
    // Training loss at the end below the first step's loss.
    let curve: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outcome.curve).unwrap()).unwrap();
    let first = curve["train"][0][1].as_f64().unwrap();
    assert!(
        outcome.final_train_loss < first,
        "no descent: first {first}, last {}",
        outcome.final_train_loss
    );

    let report = evaluate(&ckpt, data.path(), Split::Test).unwrap();
    assert_eq!(report.image_count, 2);
    assert!(report.aggregate.mae.is_finite());
    assert!(report.lpips.is_none());

    let digest_after = dir_digest(data.path()).unwrap();
    assert_eq!(digest_before, digest_after, "evaluation wrote into the dataset");

    // Identical prediction/truth: MAE 0, DSSIM ~0, PSNR sentinel inf.
    let manifest = DatasetManifest::load(data.path()).unwrap();
    let entry = manifest.split(Split::Test)[0];
    let sample = load_sample(data.path(), entry).unwrap();
    let row = glassbuf_core::metrics::metric_row(&sample.truth, &sample.truth, &sample.coverage);
    assert_eq!(row.mae, 0.0);
    assert!(row.psnr.is_infinite());
    assert!(row.dssim.abs() < 1e-12);
    let json = serde_json::to_string(&row).unwrap();
    assert!(json.contains("\"inf\""));
}

/// The L1-only toggle removes the structural term from the backward graph:
/// gradients equal those of a pure L1 loss bitwise.
#[test]
fn l1_only_toggle_matches_pure_l1_gradients() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let mut config = tiny_config(&scene, 17);
    config.toggles.loss = LossKind::L1Only;

    let data = tempfile::tempdir().unwrap();
    gen_dataset(&config, data.path()).unwrap();
    let manifest = DatasetManifest::load(data.path()).unwrap();
    let entry = manifest.split(Split::Train)[0];
    let sample = load_sample(data.path(), entry).unwrap();

    let params = GlassNetParams::init(config.net_config());
    let grads_toggled = {
        let tape = Tape::new();
        let reg = register_params(&tape, &params, true, false);
        let pred = forward_train(&tape, &params, &reg, &sample.stack).unwrap();
        let truth = tape.leaf(image_to_tensor(&sample.truth), false);
        let loss = combined_loss(&tape, pred, truth, config.effective_lambda()).unwrap();
        tape.backward(loss).unwrap();
        collect_grads(&tape, &params, &reg)
    };
    let grads_pure = {
        let tape = Tape::new();
        let reg = register_params(&tape, &params, true, false);
        let pred = forward_train(&tape, &params, &reg, &sample.stack).unwrap();
        let truth = tape.leaf(image_to_tensor(&sample.truth), false);
        let loss = l1_loss(&tape, pred, truth).unwrap();
        tape.backward(loss).unwrap();
        collect_grads(&tape, &params, &reg)
    };
    for (a, b) in grads_toggled.iter().zip(&grads_pure) {
        let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
    }
}

/// A 2x bilinear upsample with half-pixel alignment, as the baseline the
/// trained supersampler must beat.
fn bilinear_upsample2(img: &glassbuf_core::RadianceImage) -> glassbuf_core::RadianceImage {
    let (w, h) = (img.width, img.height);
    let mut out = glassbuf_core::RadianceImage::new(w * 2, h * 2);
    for y in 0..h * 2 {
        for x in 0..w * 2 {
            let sx = ((x as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, w as f32 - 1.0);
            let sy = ((y as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, h as f32 - 1.0);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let tx = sx - x0 as f32;
            let ty = sy - y0 as f32;
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                let a = img.pixel(x0, y0)[c] * (1.0 - tx) + img.pixel(x1, y0)[c] * tx;
                let b = img.pixel(x0, y1)[c] * (1.0 - tx) + img.pixel(x1, y1)[c] * tx;
                px[c] = a * (1.0 - ty) + b * ty;
            }
            *out.pixel_mut(x, y) = px;
        }
    }
    out
}

/// The trained supersampler beats plain bilinear upsampling on held-out
/// views: it sees the hi-res G-buffer, bilinear does not.
#[test]
fn trained_supersampler_beats_bilinear() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let mut config = tiny_config(&scene, 29);
    config.supersample = true;
    config.train_count = 6;
    config.max_steps = 60;
    config.super_steps = 400;
    config.spp = 16;

    let data = tempfile::tempdir().unwrap();
    gen_dataset(&config, data.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let ckpt = out.path().join("model.ckpt");
    train(&config, data.path(), &ckpt).unwrap();

    let (params, _) = glassbuf_core::glassnet::load_checkpoint(&ckpt).unwrap();
    let manifest = DatasetManifest::load(data.path()).unwrap();
    let mut mae_super = 0.0f64;
    let mut mae_bilinear = 0.0f64;
    for entry in manifest.split(Split::Test) {
        let sample = load_sample(data.path(), entry).unwrap();
        let (hires_stack, hires_gt) = sample.hires.as_ref().unwrap();
        let base = glassbuf_core::glassnet::forward_full(&params, &sample.stack);
        let up = glassbuf_core::glassnet::supersample(&params, &base, &hires_stack.gbuffer);
        mae_super += glassbuf_core::metrics::mae(&up, hires_gt);
        mae_bilinear += glassbuf_core::metrics::mae(&bilinear_upsample2(&base), hires_gt);
    }
    assert!(
        mae_super < mae_bilinear,
        "supersampler {mae_super} vs bilinear {mae_bilinear}"
    );
}

/// The naive baseline consumes the same dataset; only the toggle differs.
#[test]
fn naive_toggle_uses_identical_dataset() {
    let scenes = tempfile::tempdir().unwrap();
    let scene = write_preset(Preset::GlassStack, scenes.path()).unwrap();
    let full = tiny_config(&scene, 23);
    let mut naive = tiny_config(&scene, 23);
    naive.toggles.transparency_buffers = false;

    // Dataset generation ignores the model toggles entirely.
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    gen_dataset(&full, d1.path()).unwrap();
    gen_dataset(&naive, d2.path()).unwrap();
    let strip_manifest = |d: &Path| {
        // The manifests embed the config (toggles differ); sample payloads
        // must be identical.
        std::fs::remove_file(d.join("manifest.json")).unwrap();
    };
    strip_manifest(d1.path());
    strip_manifest(d2.path());
    assert_eq!(
        dir_digest(d1.path()).unwrap(),
        dir_digest(d2.path()).unwrap()
    );
}
