//! Checkpoint format: one file holding a little-endian u64 header length,
//! a JSON header (config, layer names and shapes, training metadata), then
//! raw little-endian float32 blobs in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GlassNetConfig, GlassNetParams};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

/// Training metadata stored beside the weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub training_step: u64,
    pub lr: f32,
    pub weight_decay: f32,
    pub lambda: f32,
    /// Training resolution (width, height).
    pub resolution: (usize, usize),
    /// Whether the supersampler was trained and applies at eval time.
    #[serde(default)]
    pub supersample: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    config: GlassNetConfig,
    layers: Vec<LayerEntry>,
    meta: CheckpointMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    shape: Vec<usize>,
}

const FORMAT_TAG: &str = "glassbuf-checkpoint-v1";

pub fn save_checkpoint(
    params: &GlassNetParams,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    let io_err = |e: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let named = params.named_tensors();
    let header = Header {
        format: FORMAT_TAG.into(),
        config: params.config,
        layers: named
            .iter()
            .map(|(name, t)| LayerEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialization");

    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    file.write_all(&(header_json.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    file.write_all(&header_json).map_err(io_err)?;
    for (_, tensor) in &named {
        for v in tensor.data() {
            file.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    file.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(GlassNetParams, CheckpointMeta), CheckpointError> {
    let io_err = |e: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let format_err = |reason: String| CheckpointError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 64 << 20 {
        return Err(format_err("implausible header length".into()));
    }
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json).map_err(io_err)?;
    let header: Header =
        serde_json::from_slice(&header_json).map_err(|e| format_err(e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(format_err(format!("unknown format tag {}", header.format)));
    }

    let mut params = GlassNetParams::init(header.config);
    {
        let named: Vec<String> = params
            .named_tensors()
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        let tensors = params.tensors_mut();
        if named.len() != header.layers.len() {
            return Err(format_err(format!(
                "layer count mismatch: file has {}, config implies {}",
                header.layers.len(),
                named.len()
            )));
        }
        for ((name, tensor), entry) in named.iter().zip(tensors).zip(&header.layers) {
            if *name != entry.name || tensor.shape() != entry.shape.as_slice() {
                return Err(format_err(format!(
                    "layer mismatch: file has {} {:?}, expected {} {:?}",
                    entry.name,
                    entry.shape,
                    name,
                    tensor.shape()
                )));
            }
            let mut buf = vec![0u8; tensor.len() * 4];
            file.read_exact(&mut buf).map_err(io_err)?;
            for (v, chunk) in tensor.data_mut().iter_mut().zip(buf.chunks_exact(4)) {
                *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            }
        }
    }
    Ok((params, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glassnet::GlassNetConfig;

    #[test]
    fn roundtrip_restores_weights_bitwise() {
        let config = GlassNetConfig {
            unet_width: 4,
            h_width: 4,
            c_sigma: 4,
            c_tau: 4,
            c_phi: 4,
            l_pe: 1,
            ..GlassNetConfig::default()
        };
        let params = GlassNetParams::init(config);
        let meta = CheckpointMeta {
            training_step: 42,
            lr: 1e-4,
            weight_decay: 1e-4,
            lambda: 0.5,
            resolution: (64, 64),
            supersample: false,
            note: "test".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &meta, &path).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_meta.training_step, 42);
        assert_eq!(loaded.config, params.config);
        for ((_, a), (_, b)) in params.named_tensors().iter().zip(loaded.named_tensors()) {
            assert_eq!(
                a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
