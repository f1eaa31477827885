//! Euclidean kernels shared by the memory bank, the quantizer and the search.
//!
//! Every exact distance in the crate goes through these two functions so that
//! exhaustive and two-stage scores are bit-identical when they visit the same
//! vectors.

/// Squared Euclidean distance, accumulated left to right in `f32`.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    libm::sqrtf(squared_l2(a, b))
}
