//! Per-thread heap accounting for the benchmark harness.
//!
//! Install [`TrackingAllocator`] as the global allocator, call [`reset_peak`]
//! before the region of interest and read [`peak_bytes`] afterwards. Counters
//! are thread-local, so concurrent work on other threads does not leak into
//! a measurement. Without the allocator installed [`is_active`] is false.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};

thread_local! {
    static CURRENT: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
    static BASELINE: Cell<isize> = const { Cell::new(0) };
}

static ACTIVE: AtomicBool = AtomicBool::new(false);

pub struct TrackingAllocator;

fn record(delta: isize) {
    let _ = CURRENT.try_with(|cur| {
        let now = cur.get() + delta;
        cur.set(now);
        let _ = PEAK.try_with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        record(-(layout.size() as isize));
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc_zeroed(layout) };
        if !ptr.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let new = unsafe { System.realloc(ptr, layout, new_size) };
        if !new.is_null() {
            record(new_size as isize - layout.size() as isize);
        }
        new
    }
}

pub fn is_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

/// Starts a new measurement window on the calling thread.
pub fn reset_peak() {
    let now = CURRENT.with(Cell::get);
    BASELINE.with(|b| b.set(now));
    PEAK.with(|p| p.set(now));
}

/// Highest live heap size on this thread since [`reset_peak`], relative to
/// the live size at reset.
pub fn peak_bytes() -> usize {
    let peak = PEAK.with(Cell::get);
    let base = BASELINE.with(Cell::get);
    (peak - base).max(0) as usize
}
