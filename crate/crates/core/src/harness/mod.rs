//! Dataset generation, the training loop, evaluation, the memory
//! benchmark, and single-view rendering — the machinery the CLI drives.

mod benchmem;
mod dataset;
mod eval;
mod oitdemo;
mod train;

pub use benchmem::{bench_memory, BenchRow, MemoryBenchReport};
pub use dataset::{dir_digest, gen_dataset, load_sample, DatasetManifest, SampleEntry, Split};
pub use eval::{evaluate, render_view, RenderOutputs};
pub use oitdemo::{oit_demo, OitDemoReport};
pub use train::{train, TrainOutcome};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdamError;
use crate::glassnet::{CheckpointError, GlassNetConfig};
use crate::image::ImageError;
use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("optimizer: {0}")]
    Adam(#[from] AdamError),
    #[error("model: {0}")]
    Model(#[from] crate::autodiff::AutodiffError),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Distinguishes caller mistakes (exit code 1) from runtime failures
    /// (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Scene(SceneError::Validation(_))
        )
    }
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Pure L1: the structural term is absent from the graph entirely.
    L1Only,
    L1Dssim,
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Toggles {
    #[serde(default = "yes")]
    pub positional_encoding: bool,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// Off reproduces the buffer-less baseline: the model input is the
    /// opaque G-buffer only.
    #[serde(default = "yes")]
    pub transparency_buffers: bool,
}

fn yes() -> bool {
    true
}
fn default_loss() -> LossKind {
    LossKind::L1Dssim
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            positional_encoding: true,
            loss: LossKind::L1Dssim,
            transparency_buffers: true,
        }
    }
}

/// Full experiment description (the JSON config on disk mirrors the field
/// names). Defaults are desk-scale: 64x64, 300/32/32 split, 256 spp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scene: PathBuf,
    #[serde(default = "d_res")]
    pub width: usize,
    #[serde(default = "d_res")]
    pub height: usize,
    #[serde(default = "d_train")]
    pub train_count: usize,
    #[serde(default = "d_holdout")]
    pub val_count: usize,
    #[serde(default = "d_holdout")]
    pub test_count: usize,
    #[serde(default = "d_spp")]
    pub spp: u32,
    #[serde(default = "d_lr")]
    pub lr: f32,
    #[serde(default = "d_wd")]
    pub weight_decay: f32,
    /// Loss mix: lambda * L1 + (1 - lambda) * DSSIM.
    #[serde(default = "d_lambda")]
    pub lambda: f32,
    #[serde(default = "d_lpe")]
    pub l_pe: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub toggles: Toggles,
    /// Also generate 2x buffers/truths and train the supersampler.
    #[serde(default)]
    pub supersample: bool,
    #[serde(default = "d_unet_width")]
    pub unet_width: usize,
    #[serde(default = "d_h_width")]
    pub h_width: usize,
    #[serde(default = "d_feat")]
    pub c_sigma: usize,
    #[serde(default = "d_feat")]
    pub c_tau: usize,
    #[serde(default = "d_feat")]
    pub c_phi: usize,
    /// Steps of supersampler training when `supersample` is set.
    #[serde(default = "d_super_steps")]
    pub super_steps: usize,
}

fn d_res() -> usize {
    64
}
fn d_train() -> usize {
    300
}
fn d_holdout() -> usize {
    32
}
fn d_spp() -> u32 {
    256
}
fn d_lr() -> f32 {
    1e-4
}
fn d_wd() -> f32 {
    1e-4
}
fn d_lambda() -> f32 {
    0.5
}
fn d_lpe() -> usize {
    2
}
fn d_batch() -> usize {
    2
}
fn d_steps() -> usize {
    1200
}
fn d_unet_width() -> usize {
    16
}
fn d_h_width() -> usize {
    32
}
fn d_feat() -> usize {
    32
}
fn d_super_steps() -> usize {
    400
}

impl TrainConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut config: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        // Scene paths are relative to the config file.
        if config.scene.is_relative() {
            if let Some(dir) = path.parent() {
                config.scene = dir.join(&config.scene);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.train_count < 1 || self.val_count < 1 || self.test_count < 1 {
            return bad("train/val/test counts must all be >= 1");
        }
        if self.lr <= 0.0 {
            return bad("lr must be > 0");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if self.spp < 1 {
            return bad("spp must be >= 1");
        }
        if self.width % 4 != 0 || self.height % 4 != 0 {
            return bad("width and height must be multiples of 4 (two pooling levels)");
        }
        if self.width < 16 || self.height < 16 {
            return bad("resolution must be at least 16x16");
        }
        if self.batch_size < 1 || self.max_steps < 1 {
            return bad("batch_size and max_steps must be >= 1");
        }
        Ok(())
    }

    /// The network configuration this experiment trains.
    pub fn net_config(&self) -> GlassNetConfig {
        GlassNetConfig {
            l_pe: self.l_pe,
            positional_encoding: self.toggles.positional_encoding,
            transparency_buffers: self.toggles.transparency_buffers,
            unet_width: self.unet_width,
            h_width: self.h_width,
            c_sigma: self.c_sigma,
            c_tau: self.c_tau,
            c_phi: self.c_phi,
            seed: self.seed,
        }
    }

    /// Effective lambda after the loss toggle.
    pub fn effective_lambda(&self) -> f32 {
        match self.toggles.loss {
            LossKind::L1Only => 1.0,
            LossKind::L1Dssim => self.lambda,
        }
    }

    /// Deterministic hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}
