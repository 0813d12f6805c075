//! Shared builders for the criterion benchmarks: deterministic scenes and
//! network parameters sized for throughput measurement.

use std::sync::Arc;

use glassbuf_core::glassnet::{GlassNetConfig, GlassNetParams};
use glassbuf_core::scene::fixtures::{write_preset, Preset};
use glassbuf_core::scene::{load_scene, sample_instance, SceneInstance};

/// Benchmark-sized network: smaller than the training default so a run
/// finishes quickly, but with the same structure.
pub fn bench_net() -> GlassNetParams {
    GlassNetParams::init(GlassNetConfig {
        l_pe: 2,
        unet_width: 8,
        h_width: 16,
        c_sigma: 16,
        c_tau: 16,
        c_phi: 16,
        ..GlassNetConfig::default()
    })
}

/// A pinned instance of the boxed-panes preset, written to a temp dir that
/// lives as long as the returned guard.
pub fn panes_instance() -> (tempfile::TempDir, SceneInstance) {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = write_preset(Preset::CornellPanes, dir.path()).expect("preset");
    let scene = Arc::new(load_scene(&path).expect("scene"));
    let instance = sample_instance(&scene, 1);
    (dir, instance)
}
