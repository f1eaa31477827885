//! Memory bank of normal patch descriptors, greedy coreset reduction and the
//! exhaustive nearest-neighbour baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distance::squared_l2;
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;

/// Default coreset size.
pub const DEFAULT_CORESET_SIZE: usize = 10_000;

/// Where a bank vector came from: training image ordinal and patch position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub image: u32,
    pub row: u32,
    pub col: u32,
}

/// `K` stored descriptors of dimension `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    dim: usize,
    data: Vec<f32>,
    provenance: Vec<Provenance>,
}

impl MemoryBank {
    pub fn new(dim: usize, data: Vec<f32>, provenance: Vec<Provenance>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("bank dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::Empty("memory bank"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::mismatch("bank value count", (data.len() / dim + 1) * dim, data.len()));
        }
        let k = data.len() / dim;
        if provenance.len() != k {
            return Err(Error::mismatch("provenance count", k, provenance.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("memory bank"));
        }
        Ok(Self {
            dim,
            data,
            provenance,
        })
    }

    /// Bank without provenance (every entry tagged image 0, position 0).
    pub fn from_vectors(dim: usize, data: Vec<f32>) -> Result<Self> {
        let k = data.len().checked_div(dim).unwrap_or(0);
        Self::new(
            dim,
            data,
            vec![
                Provenance {
                    image: 0,
                    row: 0,
                    col: 0
                };
                k
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored vectors, `K`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// New bank holding the listed vectors in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut provenance = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.vector(i));
            provenance.push(self.provenance[i]);
        }
        Self {
            dim: self.dim,
            data,
            provenance,
        }
    }
}

/// Gathers every patch of every training grid, image by image in row-major order.
pub fn collect_patches(grids: &[FeatureGrid]) -> Result<MemoryBank> {
    let first = grids.first().ok_or(Error::Empty("training grids"))?;
    let dim = first.dim();
    let total: usize = grids.iter().map(|g| g.len()).sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut provenance = Vec::with_capacity(total);
    for (n, g) in grids.iter().enumerate() {
        if g.dim() != dim {
            return Err(Error::mismatch("descriptor dimension", dim, g.dim()));
        }
        data.extend_from_slice(g.as_slice());
        for i in 0..g.height() {
            for j in 0..g.width() {
                provenance.push(Provenance {
                    image: n as u32,
                    row: i as u32,
                    col: j as u32,
                });
            }
        }
    }
    MemoryBank::new(dim, data, provenance)
}

/// How many vectors the coreset keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoresetTarget {
    Size(usize),
    /// Fraction of the candidate count, rounded up.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoresetConfig {
    pub target: CoresetTarget,
    pub seed: u64,
    /// Distances are evaluated after a random ±1 projection to this many dimensions.
    pub projection_dim: Option<usize>,
}

impl CoresetConfig {
    pub fn with_size(size: usize, seed: u64) -> Self {
        Self {
            target: CoresetTarget::Size(size),
            seed,
            projection_dim: None,
        }
    }

    /// Resolves the target against `candidates` and checks `1 ≤ size ≤ candidates`.
    pub fn target_size(&self, candidates: usize) -> Result<usize> {
        let size = match self.target {
            CoresetTarget::Size(n) => n,
            CoresetTarget::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidParameter("coreset fraction must be in (0, 1]"));
                }
                (libm::ceil(f * candidates as f64) as usize).max(1)
            }
        };
        if size == 0 {
            return Err(Error::InvalidParameter("coreset size must be at least 1"));
        }
        if size > candidates {
            return Err(Error::InvalidParameter("coreset size exceeds bank size"));
        }
        if self.projection_dim == Some(0) {
            return Err(Error::InvalidParameter("projection dimension must be positive"));
        }
        Ok(size)
    }
}

/// Projects every bank vector through a random `d × p` matrix of ±1/√p entries.
fn project(bank: &MemoryBank, target_dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let d = bank.dim();
    let scale = 1.0 / libm::sqrtf(target_dim as f32);
    let matrix: Vec<f32> = (0..d * target_dim)
        .map(|_| if rng.gen::<bool>() { scale } else { -scale })
        .collect();
    let mut out = Vec::with_capacity(bank.len() * target_dim);
    for v in bank.vectors() {
        for c in 0..target_dim {
            out.push(v.iter().enumerate().map(|(r, &x)| x * matrix[r * target_dim + c]).sum());
        }
    }
    out
}

/// Indices chosen by greedy farthest-point (k-center) selection, in pick order.
///
/// The first index is drawn uniformly from the seed. Each following pick is
/// the vector farthest from everything selected so far, lowest index on ties.
/// When the target equals the bank size the identity order is returned.
pub fn coreset_indices(bank: &MemoryBank, config: &CoresetConfig) -> Result<Vec<usize>> {
    let k = bank.len();
    let target = config.target_size(k)?;
    if target == k {
        return Ok((0..k).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = rng.gen_range(0..k);
    let (points, dim) = match config.projection_dim {
        Some(p) => (project(bank, p, &mut rng), p),
        None => (bank.as_slice().to_vec(), bank.dim()),
    };
    let point = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut selected = Vec::with_capacity(target);
    let mut nearest = vec![f32::INFINITY; k];
    let mut current = first;
    loop {
        selected.push(current);
        if selected.len() == target {
            break;
        }
        let anchor = point(current);
        let mut best = (f32::NEG_INFINITY, 0usize);
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = squared_l2(point(i), anchor);
            if d < *slot {
                *slot = d;
            }
            if *slot > best.0 {
                best = (*slot, i);
            }
        }
        current = best.1;
    }
    Ok(selected)
}

/// Reduces the bank to the greedy coreset; vectors are copied, never averaged.
pub fn coreset_select(bank: &MemoryBank, config: &CoresetConfig) -> Result<MemoryBank> {
    Ok(bank.select(&coreset_indices(bank, config)?))
}

/// Nearest bank vector to `x`: `(Euclidean distance, index)`, lowest index on ties.
pub fn exhaustive_nn_score(x: &[f32], bank: &MemoryBank) -> Result<(f32, usize)> {
    if bank.is_empty() {
        return Err(Error::Empty("memory bank"));
    }
    if x.len() != bank.dim() {
        return Err(Error::mismatch("descriptor dimension", bank.dim(), x.len()));
    }
    let mut best = (f32::INFINITY, 0usize);
    for (i, v) in bank.vectors().enumerate() {
        let d = squared_l2(x, v);
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok((libm::sqrtf(best.0), best.1))
}
