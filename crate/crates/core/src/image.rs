//! Linear radiance images, coverage masks, and the PFM/PNG file formats.
//!
//! PFM files are 32-bit little-endian floats in linear space and round-trip
//! bit-exactly; PNG is used for 8-bit previews (gamma 2.2), coverage masks
//! (0/255), and sRGB texture input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> ImageError {
    ImageError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Linear RGB radiance, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32; 3] {
        &mut self.pixels[y * self.width + x]
    }

    pub fn all_finite(&self) -> bool {
        self.pixels.iter().flatten().all(|c| c.is_finite())
    }

    /// Mean absolute difference against another image of the same size.
    pub fn mean_abs_diff(&self, other: &RadianceImage) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let n = (self.pixels.len() * 3) as f64;
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| {
                (a[0] - b[0]).abs() as f64 + (a[1] - b[1]).abs() as f64 + (a[2] - b[2]).abs() as f64
            })
            .sum::<f64>()
            / n
    }

    pub fn write_pfm(&self, path: &Path) -> Result<(), ImageError> {
        let data: Vec<f32> = self.pixels.iter().flatten().copied().collect();
        write_pfm(path, self.width, self.height, 3, &data)
    }

    pub fn read_pfm(path: &Path) -> Result<Self, ImageError> {
        let pfm = Pfm::read(path)?;
        if pfm.channels != 3 {
            return Err(format_err(path, "expected 3-channel PFM"));
        }
        let pixels = pfm
            .data
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok(Self {
            width: pfm.width,
            height: pfm.height,
            pixels,
        })
    }

    /// 8-bit preview, gamma 2.2, values clamped to [0, 1].
    pub fn write_png_preview(&self, path: &Path) -> Result<(), ImageError> {
        let mut bytes = Vec::with_capacity(self.pixels.len() * 3);
        for px in &self.pixels {
            for &c in px {
                let v = c.clamp(0.0, 1.0).powf(1.0 / 2.2);
                bytes.push((v * 255.0).round() as u8);
            }
        }
        write_png(path, self.width, self.height, png::ColorType::Rgb, &bytes)
    }
}

/// Per-pixel flag: the primary ray crosses at least one transparent surface
/// before the first opaque hit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMask {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl CoverageMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.mask[y * self.width + x] = v;
    }

    pub fn covered_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn write_png(&self, path: &Path) -> Result<(), ImageError> {
        let bytes: Vec<u8> = self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
        write_png(path, self.width, self.height, png::ColorType::Grayscale, &bytes)
    }

    pub fn read_png(path: &Path) -> Result<Self, ImageError> {
        let (width, height, color, data) = read_png(path)?;
        if color != png::ColorType::Grayscale {
            return Err(format_err(path, "coverage mask must be grayscale PNG"));
        }
        Ok(Self {
            width,
            height,
            mask: data.iter().map(|&b| b >= 128).collect(),
        })
    }
}

/// Raw PFM payload: `channels` is 3 ("PF") or 1 ("Pf").
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn read(path: &Path) -> Result<Self, ImageError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut reader = BufReader::new(file);

        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| io_err(path, e))?;
        let channels = match header.trim() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(format_err(path, format!("bad PFM magic {other:?}"))),
        };

        let mut dims = String::new();
        reader.read_line(&mut dims).map_err(|e| io_err(path, e))?;
        let mut it = dims.split_whitespace();
        let width: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "bad PFM width"))?;
        let height: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "bad PFM height"))?;

        let mut scale_line = String::new();
        reader
            .read_line(&mut scale_line)
            .map_err(|e| io_err(path, e))?;
        let scale: f32 = scale_line
            .trim()
            .parse()
            .map_err(|_| format_err(path, "bad PFM scale"))?;
        let little_endian = scale < 0.0;

        let count = width * height * channels;
        let mut raw = vec![0u8; count * 4];
        reader.read_exact(&mut raw).map_err(|e| io_err(path, e))?;

        // PFM stores rows bottom-up; we keep top-down in memory.
        let mut data = vec![0f32; count];
        let row_len = width * channels;
        for file_row in 0..height {
            let mem_row = height - 1 - file_row;
            for i in 0..row_len {
                let off = (file_row * row_len + i) * 4;
                let b = [raw[off], raw[off + 1], raw[off + 2], raw[off + 3]];
                data[mem_row * row_len + i] = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }
}

/// Write a PFM file (little endian, scale -1.0). `channels` must be 1 or 3
/// and `data` is row-major top-down with interleaved channels.
pub fn write_pfm(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    data: &[f32],
) -> Result<(), ImageError> {
    assert!(channels == 1 || channels == 3, "PFM holds 1 or 3 channels");
    assert_eq!(data.len(), width * height * channels);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let magic = if channels == 3 { "PF" } else { "Pf" };
    write!(w, "{magic}\n{width} {height}\n-1.0\n").map_err(|e| io_err(path, e))?;
    let row_len = width * channels;
    for file_row in 0..height {
        let mem_row = height - 1 - file_row;
        let row = &data[mem_row * row_len..(mem_row + 1) * row_len];
        for &v in row {
            w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<(), ImageError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| format_err(path, e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Read an 8-bit PNG; returns (width, height, color type, raw bytes).
pub fn read_png(path: &Path) -> Result<(usize, usize, png::ColorType, Vec<u8>), ImageError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(path, "only 8-bit PNG supported"));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.color_type, buf))
}

/// sRGB electro-optical transfer function (decode to linear).
pub fn srgb_to_linear(s: f32) -> f32 {
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_roundtrip_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        let mut img = RadianceImage::new(5, 3);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [i as f32 * 0.25, -1.5 + i as f32, 1e-7 * i as f32];
        }
        img.write_pfm(&path).unwrap();
        let back = RadianceImage::read_pfm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_roundtrip_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.125 - 0.4).collect();
        write_pfm(&path, 4, 3, 1, &data).unwrap();
        let pfm = Pfm::read(&path).unwrap();
        assert_eq!(pfm.channels, 1);
        assert_eq!(pfm.data, data);
    }

    #[test]
    fn coverage_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut m = CoverageMask::new(4, 4);
        m.set(1, 2, true);
        m.set(3, 0, true);
        m.write_png(&path).unwrap();
        let back = CoverageMask::read_png(&path).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn pfm_bit_exact(values in proptest::collection::vec(-1e6f32..1e6, 3 * 6)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.pfm");
            write_pfm(&path, 3, 2, 3, &values).unwrap();
            let back = Pfm::read(&path).unwrap();
            prop_assert_eq!(
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
