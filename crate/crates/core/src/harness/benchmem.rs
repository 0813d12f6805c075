//! Buffer-memory benchmark: raw buffer footprints versus the streaming
//! transparency stage's measured peak, per transparent-object count.

use std::path::Path;

use serde::Serialize;

use super::{io_err, HarnessError};
use crate::glassnet::{forward_full_instrumented, GlassNetConfig, GlassNetParams};
use crate::raster::{buffer_bytes, synthetic_stack};

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub t: usize,
    /// Full stack payload: 17 * (t + 1) * w * h * 4.
    pub raw_stack_bytes: usize,
    /// One 17-channel buffer at this resolution.
    pub per_buffer_bytes: usize,
    /// All transparency buffers resident at once (the traditional mode).
    pub naive_resident_bytes: usize,
    /// Measured peak of live tensor bytes inside the streaming
    /// transparency stage.
    pub streaming_peak_bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct MemoryBenchReport {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<BenchRow>,
}

/// Run the streaming stage on synthetic stacks for each `t` and record both
/// the arithmetic buffer sizes and the measured live-byte peak.
pub fn bench_memory(
    t_values: &[usize],
    width: usize,
    height: usize,
    net: GlassNetConfig,
) -> MemoryBenchReport {
    let params = GlassNetParams::init(net);
    let per_buffer = buffer_bytes(width, height);
    let rows = t_values
        .iter()
        .map(|&t| {
            let stack = synthetic_stack(width, height, t, 0x6e6d + t as u64);
            let (_, stats) = forward_full_instrumented(&params, &stack);
            BenchRow {
                t,
                raw_stack_bytes: stack.raw_bytes(),
                per_buffer_bytes: per_buffer,
                naive_resident_bytes: per_buffer * t,
                streaming_peak_bytes: stats.transparency_peak_bytes,
            }
        })
        .collect();
    MemoryBenchReport {
        width,
        height,
        rows,
    }
}

impl MemoryBenchReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut out = String::from(
            "t,raw_stack_bytes,per_buffer_bytes,naive_resident_bytes,streaming_peak_bytes\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.t,
                r.raw_stack_bytes,
                r.per_buffer_bytes,
                r.naive_resident_bytes,
                r.streaming_peak_bytes
            ));
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).expect("report serialization");
        std::fs::write(path, json).map_err(|e| io_err(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig10_sizes_at_256() {
        let net = GlassNetConfig {
            unet_width: 4,
            h_width: 4,
            c_sigma: 4,
            c_tau: 4,
            c_phi: 4,
            l_pe: 1,
            ..GlassNetConfig::default()
        };
        let report = bench_memory(&[1, 2], 16, 16, net);
        assert_eq!(report.rows[0].raw_stack_bytes, 17 * 2 * 16 * 16 * 4);
        assert_eq!(report.rows[1].raw_stack_bytes, 17 * 3 * 16 * 16 * 4);
        // Streaming peak does not grow with t.
        assert_eq!(
            report.rows[0].streaming_peak_bytes,
            report.rows[1].streaming_peak_bytes
        );
        // The 256x256 single-buffer figure.
        assert_eq!(buffer_bytes(256, 256), 4_456_448);
    }
}
