//! Operation counters used to instrument scoring kernels for benchmarks.

/// Sink for multiply counts. The no-op implementation compiles away.
pub trait Counter {
    fn add(&mut self, n: u64);
}

/// Discards counts.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCount;

impl Counter for NoCount {
    #[inline(always)]
    fn add(&mut self, _n: u64) {}
}

/// Tallies multiply-accumulate operations.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MulCount(pub u64);

impl Counter for MulCount {
    #[inline]
    fn add(&mut self, n: u64) {
        self.0 += n;
    }
}
