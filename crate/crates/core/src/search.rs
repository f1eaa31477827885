//! Two-stage nearest-neighbour search over a product-quantized bank.
//!
//! Stage one ranks all `K` codes with a per-query lookup table (`O(K·m)`
//! lookups) and keeps the `k` best in a bounded max-heap. Stage two decodes
//! only those `k` candidates and takes the exact Euclidean minimum (`O(k·d)`).
//!
//! Every ordering breaks ties by the lower bank index, so the candidate set for
//! `k` is always a prefix of the candidate set for any larger `k`.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::anomaly_map::ScoreGrid;
use crate::bank::{exhaustive_nn_score, MemoryBank};
use crate::distance::squared_l2;
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::pq::{encode, Codebooks, CompressedBank};

pub const DEFAULT_CANDIDATES: usize = 1000;

/// How stage one compares the query with the codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Raw query sub-vectors against centroids.
    #[default]
    Adc,
    /// Query quantized first, then centroid against centroid.
    Sdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Candidates kept after stage one.
    pub k: usize,
    pub mode: SearchMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_CANDIDATES,
            mode: SearchMode::Adc,
        }
    }
}

impl SearchConfig {
    pub fn new(k: usize, mode: SearchMode) -> Self {
        Self { k, mode }
    }

    pub fn validate(&self, bank_len: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("candidate count k must be at least 1"));
        }
        if self.k > bank_len {
            return Err(Error::InvalidParameter("candidate count k exceeds bank size"));
        }
        Ok(())
    }
}

/// `m × V` squared sub-distances for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    subspaces: usize,
    centroids: usize,
    values: Vec<f32>,
}

impl DistanceTable {
    pub fn get(&self, j: usize, i: usize) -> f32 {
        self.values[j * self.centroids + i]
    }

    pub fn row(&self, j: usize) -> &[f32] {
        &self.values[j * self.centroids..(j + 1) * self.centroids]
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    /// Approximate squared distance to a code: `Σ_j table[j][code_j]`.
    #[inline]
    pub fn lookup(&self, code: &[u16]) -> f32 {
        code.iter()
            .enumerate()
            .map(|(j, &i)| self.values[j * self.centroids + i as usize])
            .sum()
    }
}

/// Squared distance from each query sub-vector to every centroid of its subspace.
pub fn build_distance_table(x: &[f32], codebooks: &Codebooks) -> Result<DistanceTable> {
    if x.len() != codebooks.dim() {
        return Err(Error::mismatch("descriptor dimension", codebooks.dim(), x.len()));
    }
    let (m, sd, v) = (codebooks.subspaces(), codebooks.sub_dim(), codebooks.centroids_per_subspace());
    let mut values = Vec::with_capacity(m * v);
    for j in 0..m {
        let sub = &x[j * sd..(j + 1) * sd];
        values.extend(codebooks.subspace(j).chunks_exact(sd).map(|c| squared_l2(sub, c)));
    }
    Ok(DistanceTable {
        subspaces: m,
        centroids: v,
        values,
    })
}

/// Symmetric table: the query is replaced by its own reconstruction first.
pub fn build_sdc_table(x: &[f32], codebooks: &Codebooks) -> Result<DistanceTable> {
    let code = encode(x, codebooks)?;
    let (m, sd, v) = (codebooks.subspaces(), codebooks.sub_dim(), codebooks.centroids_per_subspace());
    let mut values = Vec::with_capacity(m * v);
    for (j, &q) in code.indices().iter().enumerate() {
        let anchor = codebooks.centroid(j, q as usize);
        values.extend(codebooks.subspace(j).chunks_exact(sd).map(|c| squared_l2(anchor, c)));
    }
    Ok(DistanceTable {
        subspaces: m,
        centroids: v,
        values,
    })
}

/// A stage-one hit: bank index and approximate squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub distance: f32,
}

impl Candidate {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// The `k` smallest `(distance, index)` pairs, ascending.
pub fn top_k<I: IntoIterator<Item = Candidate>>(items: I, k: usize) -> Vec<Candidate> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for c in items {
        if heap.len() < k {
            heap.push(c);
        } else if let Some(worst) = heap.peek() {
            if c < *worst {
                heap.pop();
                heap.push(c);
            }
        }
    }
    heap.into_sorted_vec()
}

fn table_for(x: &[f32], bank: &CompressedBank, mode: SearchMode) -> Result<DistanceTable> {
    match mode {
        SearchMode::Adc => build_distance_table(x, bank.codebooks()),
        SearchMode::Sdc => build_sdc_table(x, bank.codebooks()),
    }
}

/// Stage one: the `k` codes closest to `x` under the lookup-table distance.
pub fn coarse_search(x: &[f32], bank: &CompressedBank, config: &SearchConfig) -> Result<Vec<Candidate>> {
    config.validate(bank.len())?;
    let table = table_for(x, bank, config.mode)?;
    Ok(coarse_with_table(&table, bank, config.k))
}

/// Stage one with a prebuilt table.
pub fn coarse_with_table(table: &DistanceTable, bank: &CompressedBank, k: usize) -> Vec<Candidate> {
    top_k(
        (0..bank.len()).map(|i| Candidate {
            index: i,
            distance: table.lookup(bank.code(i)),
        }),
        k,
    )
}

/// Stage two: exact distance to each decoded candidate, minimum wins (lowest index on ties).
pub fn fine_search(x: &[f32], candidates: &[usize], bank: &CompressedBank) -> Result<(f32, usize)> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    if x.len() != bank.dim() {
        return Err(Error::mismatch("descriptor dimension", bank.dim(), x.len()));
    }
    let mut buf = vec![0.0f32; bank.dim()];
    let mut best = (f32::INFINITY, usize::MAX);
    for &i in candidates {
        if i >= bank.len() {
            return Err(Error::IndexOutOfRange {
                what: "candidate",
                index: i,
                len: bank.len(),
            });
        }
        bank.decode_vector(i, &mut buf);
        let d = squared_l2(x, &buf);
        if d < best.0 || (d == best.0 && i < best.1) {
            best = (d, i);
        }
    }
    Ok((libm::sqrtf(best.0), best.1))
}

/// Coarse then fine search; returns the anomaly score and the matched bank index.
pub fn search(x: &[f32], bank: &CompressedBank, config: &SearchConfig) -> Result<(f32, usize)> {
    let candidates: Vec<usize> = coarse_search(x, bank, config)?.iter().map(|c| c.index).collect();
    fine_search(x, &candidates, bank)
}

/// Patch anomaly score `s(x) ≥ 0` from the two-stage search.
pub fn score_patch(x: &[f32], bank: &CompressedBank, config: &SearchConfig) -> Result<f32> {
    search(x, bank, config).map(|(s, _)| s)
}

/// Two-stage scores for every patch of an image.
pub fn score_grid_two_stage(grid: &FeatureGrid, bank: &CompressedBank, config: &SearchConfig) -> Result<ScoreGrid> {
    if grid.dim() != bank.dim() {
        return Err(Error::mismatch("descriptor dimension", bank.dim(), grid.dim()));
    }
    config.validate(bank.len())?;
    let values = grid
        .patches()
        .map(|x| score_patch(x, bank, config))
        .collect::<Result<Vec<_>>>()?;
    ScoreGrid::new(grid.height(), grid.width(), values)
}

/// Exhaustive nearest-neighbour scores for every patch of an image.
pub fn score_grid_exhaustive(grid: &FeatureGrid, bank: &MemoryBank) -> Result<ScoreGrid> {
    let values = grid
        .patches()
        .map(|x| exhaustive_nn_score(x, bank).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    ScoreGrid::new(grid.height(), grid.width(), values)
}

/// Fraction of queries whose decoded-space nearest neighbour survives stage one.
pub fn recall_at_k<'a, I>(queries: I, bank: &CompressedBank, config: &SearchConfig) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let decoded = bank.decode_all();
    let (mut hits, mut total) = (0usize, 0usize);
    for x in queries {
        let (_, truth) = exhaustive_nn_score(x, &decoded)?;
        let cands = coarse_search(x, bank, config)?;
        if cands.iter().any(|c| c.index == truth) {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty("queries"));
    }
    Ok(hits as f64 / total as f64)
}

/// Per-query work of the two search strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperationCounts {
    /// `K · m` table lookups.
    pub coarse_lookups: u64,
    /// `k · d` multiplies on decoded candidates.
    pub fine_mults: u64,
    /// `K · d` multiplies for exhaustive search.
    pub exhaustive_mults: u64,
    /// `V · d` multiplies to build the lookup table.
    pub table_mults: u64,
}

impl OperationCounts {
    /// `K·m + k·d`
    pub fn two_stage_total(&self) -> u64 {
        self.coarse_lookups + self.fine_mults
    }

    /// Exhaustive over two-stage.
    pub fn speedup(&self) -> f64 {
        self.exhaustive_mults as f64 / self.two_stage_total() as f64
    }
}

pub fn count_operations(vectors: usize, dim: usize, subspaces: usize, bits: u32, k: usize) -> OperationCounts {
    let (vectors, dim, subspaces, k) = (vectors as u64, dim as u64, subspaces as u64, k as u64);
    OperationCounts {
        coarse_lookups: vectors * subspaces,
        fine_mults: k * dim,
        exhaustive_mults: vectors * dim,
        table_mults: (1u64 << bits) * dim,
    }
}

/// Operation counts for a concrete bank and configuration.
pub fn count_bank_operations(bank: &CompressedBank, config: &SearchConfig) -> OperationCounts {
    let cb = bank.codebooks();
    count_operations(bank.len(), bank.dim(), cb.subspaces(), cb.bits(), config.k)
}
