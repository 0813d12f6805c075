//! Per-thread accounting of live tensor bytes.
//!
//! Every tensor buffer registers its size on creation and deregisters on
//! drop, all on the current thread, so a single-threaded stage can measure
//! its peak working set exactly. Kernels never allocate on worker threads;
//! they fill caller-allocated buffers, which keeps the numbers meaningful
//! even when the math inside runs on rayon.

use std::cell::Cell;

thread_local! {
    static LIVE: Cell<u64> = const { Cell::new(0) };
    static PEAK: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn track_alloc(bytes: usize) {
    LIVE.with(|l| {
        let live = l.get() + bytes as u64;
        l.set(live);
        PEAK.with(|p| {
            if live > p.get() {
                p.set(live);
            }
        });
    });
}

pub(crate) fn track_free(bytes: usize) {
    LIVE.with(|l| l.set(l.get().saturating_sub(bytes as u64)));
}

/// Tensor bytes currently alive on this thread.
pub fn live_bytes() -> u64 {
    LIVE.with(Cell::get)
}

/// Highest value of [`live_bytes`] since the last [`reset_peak`].
pub fn peak_bytes() -> u64 {
    PEAK.with(Cell::get)
}

/// Start a new peak measurement window at the current live level.
pub fn reset_peak() {
    let live = live_bytes();
    PEAK.with(|p| p.set(live));
}
