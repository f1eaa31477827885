//! Detection metrics and analytic resource accounting.

use alloc::vec::Vec;

use crate::anomaly_map::ScoreGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// Area under the ROC curve of `scores` against `labels` (anomalous = positive).
///
/// Computed as the Mann-Whitney statistic with mid-ranks, so a tied
/// anomalous/normal pair counts one half. Equals trapezoidal integration of
/// the empirical ROC curve.
pub fn auroc(scores: &[f32], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::mismatch("label count", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|l| l.is_anomalous()).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidParameter("AUROC needs both normal and anomalous samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of 1-based mid-ranks over positives
    let mut rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let value = scores[order[start]];
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == value {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end]
            .iter()
            .filter(|&&i| labels[i].is_anomalous())
            .count();
        rank_sum += mid_rank * tied_pos as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Separate positive and negative score lists.
pub fn auroc_split(anomalous: &[f32], normal: &[f32]) -> Result<f64> {
    let mut scores = Vec::with_capacity(anomalous.len() + normal.len());
    let mut labels = Vec::with_capacity(scores.capacity());
    scores.extend_from_slice(anomalous);
    labels.extend(anomalous.iter().map(|_| Label::Anomalous));
    scores.extend_from_slice(normal);
    labels.extend(normal.iter().map(|_| Label::Normal));
    auroc(&scores, &labels)
}

/// Ground-truth pixel mask, `true` on defects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::mismatch("mask pixel count", height * width, pixels.len()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: alloc::vec![false; height * width],
        }
    }
}

/// AUROC over every pixel of every image, pooled into one ranking.
pub fn pixel_auroc(maps: &[ScoreGrid], masks: &[Mask]) -> Result<f64> {
    if maps.len() != masks.len() {
        return Err(Error::mismatch("mask count", maps.len(), masks.len()));
    }
    if maps.is_empty() {
        return Err(Error::Empty("pixel maps"));
    }
    let total: usize = maps.iter().map(|m| m.values().len()).sum();
    let mut scores = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (map, mask) in maps.iter().zip(masks) {
        if map.height() != mask.height {
            return Err(Error::mismatch("mask height", map.height(), mask.height));
        }
        if map.width() != mask.width {
            return Err(Error::mismatch("mask width", map.width(), mask.width));
        }
        scores.extend_from_slice(map.values());
        labels.extend(mask.pixels.iter().map(|&p| if p { Label::Anomalous } else { Label::Normal }));
    }
    if !labels.iter().any(|l| l.is_anomalous()) {
        return Err(Error::InvalidParameter("masks contain no defect pixels"));
    }
    auroc(&scores, &labels)
}

/// Multiplies per patch for the full-covariance distance, `d² + d`.
pub fn full_mahalanobis_mults(dim: usize) -> u64 {
    (dim * dim + dim) as u64
}

/// Multiplies per patch for the diagonal distance, `d`.
pub fn diag_mahalanobis_mults(dim: usize) -> u64 {
    dim as u64
}

/// Model payload sizes (values only, 4-byte floats), excluding file headers.
pub mod bytes {
    /// Mean plus variance per position.
    pub fn diag_model(positions: usize, dim: usize) -> usize {
        positions * 8 * dim
    }

    /// Mean plus covariance per position.
    pub fn full_model_statistics(positions: usize, dim: usize) -> usize {
        positions * (4 * dim + 4 * dim * dim)
    }

    /// Mean, covariance and precision per position, as serialized.
    pub fn full_model(positions: usize, dim: usize) -> usize {
        positions * (4 * dim + 8 * dim * dim)
    }

    /// Raw memory bank, `4 · K · d`.
    pub fn raw_bank(vectors: usize, dim: usize) -> usize {
        4 * vectors * dim
    }

    /// Provenance table of a raw bank: three `u32` per vector.
    pub fn bank_provenance(vectors: usize) -> usize {
        12 * vectors
    }
}

/// Estimated per-image scratch memory while scoring, in bytes.
pub mod transient {
    /// Difference vector in `f64`.
    pub fn diag(dim: usize) -> usize {
        8 * dim
    }

    /// Difference vector and one projected row, both `f64`.
    pub fn full(dim: usize) -> usize {
        8 * dim + 8
    }

    /// One query at a time, plus the per-patch score grid.
    pub fn exhaustive(dim: usize, patches: usize) -> usize {
        4 * dim + 4 * patches
    }

    /// Lookup table, candidate heap, decode buffer and the score grid.
    pub fn two_stage(dim: usize, subspaces: usize, bits: u32, k: usize, patches: usize) -> usize {
        let table = 4 * subspaces * (1usize << bits);
        let heap = k * core::mem::size_of::<crate::search::Candidate>();
        let candidates = k * core::mem::size_of::<usize>();
        table + heap + candidates + 4 * dim + 4 * patches
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc_split(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auroc_split(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(auroc_split(&[0.1], &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_error() {
        assert!(auroc(&[0.1, 0.2], &[Label::Normal, Label::Normal]).is_err());
        assert!(auroc(&[0.1], &[Label::Normal, Label::Normal]).is_err());
    }

    #[test]
    fn pair_count_small() {
        // pairs (a, n): (3,1) win, (3,3) half, (2,1) win, (2,3) loss → 2.5/4
        assert_eq!(auroc_split(&[3.0, 2.0], &[1.0, 3.0]).unwrap(), 0.625);
    }

    #[test]
    fn pixel_cases() {
        let map = ScoreGrid::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mask = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(pixel_auroc(&[map], core::slice::from_ref(&mask)).unwrap(), 1.0);
        let flat = ScoreGrid::new(2, 2, vec![0.3; 4]).unwrap();
        assert_eq!(pixel_auroc(core::slice::from_ref(&flat), &[mask]).unwrap(), 0.5);
        assert!(pixel_auroc(core::slice::from_ref(&flat), &[Mask::empty(2, 2)]).is_err());
        assert!(pixel_auroc(&[flat], &[Mask::empty(2, 3)]).is_err());
    }

    #[test]
    fn byte_formulas() {
        assert_eq!(bytes::diag_model(1, 2), 16);
        assert_eq!(bytes::raw_bank(10_000, 256), 10_240_000);
        assert_eq!(full_mahalanobis_mults(4), 20);
        assert_eq!(diag_mahalanobis_mults(4), 4);
    }
}
