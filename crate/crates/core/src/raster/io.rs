//! Buffer-stack dump format: one PFM per channel group plus a JSON manifest
//! recording channel names, order, and the depth normalization constant.
//! Floats survive a save/load cycle bit-exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BufferStack, GBuffer, TransparencyBuffer, GBUFFER_GROUPS, TBUFFER_GROUPS};
use crate::image::{write_pfm, ImageError, Pfm};

#[derive(Debug, Serialize, Deserialize)]
pub struct BufferManifest {
    pub width: usize,
    pub height: usize,
    /// Number of transparency buffers.
    pub t: usize,
    /// View-space depth mapped to 1 in the depth channels.
    pub depth_scale: f32,
    /// Channel group names in storage order for the G-buffer.
    pub gbuffer_groups: Vec<GroupEntry>,
    /// Channel group names in storage order for each transparency buffer.
    pub tbuffer_groups: Vec<GroupEntry>,
    /// Object id per transparency buffer, in buffer order.
    pub tbuffer_objects: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub channels: usize,
}

fn group_file(dir: &Path, prefix: &str, name: &str) -> PathBuf {
    dir.join(format!("{prefix}_{name}.pfm"))
}

/// Write the stack into `dir` (created if missing); returns the manifest
/// path.
pub fn save_buffer_stack(stack: &BufferStack, dir: &Path) -> Result<PathBuf, ImageError> {
    std::fs::create_dir_all(dir).map_err(|e| ImageError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let g = &stack.gbuffer;
    let (w, h) = (g.width, g.height);

    save_rgb(&group_file(dir, "gbuffer", "normal"), w, h, &g.normal)?;
    save_rgb(&group_file(dir, "gbuffer", "position"), w, h, &g.position)?;
    save_rgb(&group_file(dir, "gbuffer", "albedo"), w, h, &g.albedo)?;
    write_pfm(&group_file(dir, "gbuffer", "roughness"), w, h, 1, &g.roughness)?;
    save_rgb(&group_file(dir, "gbuffer", "omega_o"), w, h, &g.omega_o)?;
    write_pfm(&group_file(dir, "gbuffer", "depth"), w, h, 1, &g.depth)?;
    save_rgb(&group_file(dir, "gbuffer", "l_d"), w, h, &g.l_d)?;

    for (i, tb) in stack.tbuffers.iter().enumerate() {
        let prefix = format!("tbuffer{i}");
        save_rgb(&group_file(dir, &prefix, "normal"), w, h, &tb.normal)?;
        save_rgb(&group_file(dir, &prefix, "position"), w, h, &tb.position)?;
        save_rgb(&group_file(dir, &prefix, "albedo"), w, h, &tb.albedo)?;
        write_pfm(&group_file(dir, &prefix, "roughness"), w, h, 1, &tb.roughness)?;
        save_rgb(&group_file(dir, &prefix, "omega_o"), w, h, &tb.omega_o)?;
        write_pfm(&group_file(dir, &prefix, "depth"), w, h, 1, &tb.depth)?;
        write_pfm(
            &group_file(dir, &prefix, "relative_depth"),
            w,
            h,
            1,
            &tb.relative_depth,
        )?;
        write_pfm(&group_file(dir, &prefix, "alpha"), w, h, 1, &tb.alpha)?;
        write_pfm(&group_file(dir, &prefix, "coverage"), w, h, 1, &tb.coverage)?;
    }

    let manifest = BufferManifest {
        width: w,
        height: h,
        t: stack.t(),
        depth_scale: stack.depth_scale,
        gbuffer_groups: GBUFFER_GROUPS
            .iter()
            .map(|(name, channels)| GroupEntry {
                name: (*name).into(),
                channels: *channels,
            })
            .collect(),
        tbuffer_groups: TBUFFER_GROUPS
            .iter()
            .map(|(name, channels)| GroupEntry {
                name: (*name).into(),
                channels: *channels,
            })
            .collect(),
        tbuffer_objects: stack.tbuffers.iter().map(|t| t.object).collect(),
    };
    let path = dir.join("buffers.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    std::fs::write(&path, json).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}

pub fn load_buffer_stack(dir: &Path) -> Result<BufferStack, ImageError> {
    let manifest_path = dir.join("buffers.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| ImageError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    let manifest: BufferManifest =
        serde_json::from_str(&text).map_err(|e| ImageError::Format {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?;
    let (w, h) = (manifest.width, manifest.height);

    let mut gbuffer = GBuffer::new(w, h);
    gbuffer.normal = load_rgb(&group_file(dir, "gbuffer", "normal"), w, h)?;
    gbuffer.position = load_rgb(&group_file(dir, "gbuffer", "position"), w, h)?;
    gbuffer.albedo = load_rgb(&group_file(dir, "gbuffer", "albedo"), w, h)?;
    gbuffer.roughness = load_gray(&group_file(dir, "gbuffer", "roughness"), w, h)?;
    gbuffer.omega_o = load_rgb(&group_file(dir, "gbuffer", "omega_o"), w, h)?;
    gbuffer.depth = load_gray(&group_file(dir, "gbuffer", "depth"), w, h)?;
    gbuffer.l_d = load_rgb(&group_file(dir, "gbuffer", "l_d"), w, h)?;

    let mut tbuffers = Vec::with_capacity(manifest.t);
    for i in 0..manifest.t {
        let prefix = format!("tbuffer{i}");
        let mut tb = TransparencyBuffer::new(w, h, manifest.tbuffer_objects[i]);
        tb.normal = load_rgb(&group_file(dir, &prefix, "normal"), w, h)?;
        tb.position = load_rgb(&group_file(dir, &prefix, "position"), w, h)?;
        tb.albedo = load_rgb(&group_file(dir, &prefix, "albedo"), w, h)?;
        tb.roughness = load_gray(&group_file(dir, &prefix, "roughness"), w, h)?;
        tb.omega_o = load_rgb(&group_file(dir, &prefix, "omega_o"), w, h)?;
        tb.depth = load_gray(&group_file(dir, &prefix, "depth"), w, h)?;
        tb.relative_depth = load_gray(&group_file(dir, &prefix, "relative_depth"), w, h)?;
        tb.alpha = load_gray(&group_file(dir, &prefix, "alpha"), w, h)?;
        tb.coverage = load_gray(&group_file(dir, &prefix, "coverage"), w, h)?;
        tbuffers.push(tb);
    }

    Ok(BufferStack {
        gbuffer,
        tbuffers,
        depth_scale: manifest.depth_scale,
    })
}

fn save_rgb(path: &Path, w: usize, h: usize, plane: &[[f32; 3]]) -> Result<(), ImageError> {
    let data: Vec<f32> = plane.iter().flatten().copied().collect();
    write_pfm(path, w, h, 3, &data)
}

fn load_rgb(path: &Path, w: usize, h: usize) -> Result<Vec<[f32; 3]>, ImageError> {
    let pfm = Pfm::read(path)?;
    if pfm.channels != 3 || pfm.width != w || pfm.height != h {
        return Err(ImageError::Dimension(format!(
            "{} is not a {w}x{h} 3-channel PFM",
            path.display()
        )));
    }
    Ok(pfm.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

fn load_gray(path: &Path, w: usize, h: usize) -> Result<Vec<f32>, ImageError> {
    let pfm = Pfm::read(path)?;
    if pfm.channels != 1 || pfm.width != w || pfm.height != h {
        return Err(ImageError::Dimension(format!(
            "{} is not a {w}x{h} 1-channel PFM",
            path.display()
        )));
    }
    Ok(pfm.data)
}
