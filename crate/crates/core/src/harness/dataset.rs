//! Dataset generation and loading. Every sample directory holds the buffer
//! stack dump, the path-traced ground truth (PFM plus PNG preview), the
//! transparency coverage mask, and a small meta file; a top-level manifest
//! lists them all. Re-running with the same config is bitwise identical.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, TrainConfig};
use crate::camera::Camera;
use crate::image::{CoverageMask, RadianceImage};
use crate::pathtrace::{TraceOptions, Tracer};
use crate::raster::{load_buffer_stack, rasterize_with, save_buffer_stack, BufferStack};
use crate::rng::hash64;
use crate::scene::{load_scene, sample_instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    fn id(&self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub split: Split,
    pub index: usize,
    pub dir: String,
    pub instance_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: TrainConfig,
    pub config_hash: String,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))
    }

    pub fn split(&self, split: Split) -> Vec<&SampleEntry> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    instance_seed: u64,
    gt_seed: u64,
    camera_position: [f32; 3],
    camera_look_at: [f32; 3],
    fov_degrees: f32,
}

/// Render every sample of every split into `out_dir`. Instance seeds are
/// `hash(config.seed, split, index)`, so splits are disjoint and the run
/// is reproducible sample by sample.
pub fn gen_dataset(config: &TrainConfig, out_dir: &Path) -> Result<DatasetManifest, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let scene = Arc::new(load_scene(&config.scene)?);

    let mut samples = Vec::new();
    for split in Split::ALL {
        let count = match split {
            Split::Train => config.train_count,
            Split::Val => config.val_count,
            Split::Test => config.test_count,
        };
        for index in 0..count {
            let instance_seed = hash64(&[config.seed, split.id(), index as u64]);
            let dir_name = format!("{}_{index:04}", split.name());
            let sample_dir = out_dir.join(&dir_name);
            render_sample(config, &scene, instance_seed, &sample_dir).map_err(|e| {
                HarnessError::Dataset(format!("sample {dir_name} (seed {instance_seed}): {e}"))
            })?;
            samples.push(SampleEntry {
                split,
                index,
                dir: dir_name,
                instance_seed,
            });
        }
    }

    let manifest = DatasetManifest {
        config: config.clone(),
        config_hash: config.hash(),
        samples,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

fn render_sample(
    config: &TrainConfig,
    scene: &Arc<crate::scene::Scene>,
    instance_seed: u64,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let instance = sample_instance(scene, instance_seed);
    let render_scene = instance.resolve();
    let camera = Camera::new(&instance.camera);
    let tracer = Tracer::new(&render_scene);
    let gt_seed = hash64(&[instance_seed, 0x6774]);

    let stack = rasterize_with(&render_scene, &tracer, &camera, config.width, config.height);
    save_buffer_stack(&stack, dir)?;

    let opts = TraceOptions {
        spp: config.spp,
        seed: gt_seed,
        ..TraceOptions::default()
    };
    let gt = tracer.trace_image(&camera, config.width, config.height, opts);
    gt.write_pfm(&dir.join("gt.pfm"))?;
    gt.write_png_preview(&dir.join("gt.png"))?;

    let coverage = tracer.trace_coverage(&camera, config.width, config.height);
    coverage.write_png(&dir.join("coverage.png"))?;

    if config.supersample {
        let hires_dir = dir.join("hires");
        std::fs::create_dir_all(&hires_dir).map_err(|e| io_err(&hires_dir, e))?;
        let hires_stack = rasterize_with(
            &render_scene,
            &tracer,
            &camera,
            config.width * 2,
            config.height * 2,
        );
        save_buffer_stack(&hires_stack, &hires_dir)?;
        let hires_gt =
            tracer.trace_image(&camera, config.width * 2, config.height * 2, opts);
        hires_gt.write_pfm(&hires_dir.join("gt.pfm"))?;
    }

    let meta = SampleMeta {
        instance_seed,
        gt_seed,
        camera_position: instance.camera.position.to_array(),
        camera_look_at: instance.camera.look_at.to_array(),
        fov_degrees: instance.camera.fov_degrees,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serialization");
    std::fs::write(&meta_path, json).map_err(|e| io_err(&meta_path, e))?;
    Ok(())
}

/// One loaded training/eval record.
pub struct LoadedSample {
    pub stack: BufferStack,
    pub truth: RadianceImage,
    pub coverage: CoverageMask,
    pub hires: Option<(BufferStack, RadianceImage)>,
}

pub fn load_sample(dataset_dir: &Path, entry: &SampleEntry) -> Result<LoadedSample, HarnessError> {
    let dir = dataset_dir.join(&entry.dir);
    let stack = load_buffer_stack(&dir)?;
    let truth = RadianceImage::read_pfm(&dir.join("gt.pfm"))?;
    let coverage = CoverageMask::read_png(&dir.join("coverage.png"))?;
    let hires_dir = dir.join("hires");
    let hires = if hires_dir.is_dir() {
        Some((
            load_buffer_stack(&hires_dir)?,
            RadianceImage::read_pfm(&hires_dir.join("gt.pfm"))?,
        ))
    } else {
        None
    };
    if truth.width != stack.gbuffer.width || truth.height != stack.gbuffer.height {
        return Err(HarnessError::Dataset(format!(
            "{}: ground truth {}x{} does not match buffers {}x{}",
            dir.display(),
            truth.width,
            truth.height,
            stack.gbuffer.width,
            stack.gbuffer.height
        )));
    }
    Ok(LoadedSample {
        stack,
        truth,
        coverage,
        hires,
    })
}

/// Deterministic content hash of a dataset directory (file names and
/// bytes), for reproducibility checks.
pub fn dir_digest(dir: &Path) -> Result<u64, HarnessError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        for b in rel.to_string_lossy().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    Ok(h)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}
