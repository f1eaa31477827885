//! Product quantization of the memory bank.
//!
//! A `d`-dimensional vector is split into `m` contiguous sub-vectors of
//! `d / m` dimensions. Each subspace owns a codebook of `V = 2^b` centroids
//! learned with k-means, and a vector is stored as `m` centroid indices.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bank::MemoryBank;
use crate::distance::squared_l2;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeans};

pub const DEFAULT_SUBSPACES: usize = 8;
pub const DEFAULT_BITS: u32 = 8;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const MAX_BITS: u32 = 16;

/// Per-subspace centroid tables, stored subspace-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    subspaces: usize,
    sub_dim: usize,
    bits: u32,
    /// `m × V × sub_dim`
    centroids: Vec<f32>,
}

impl Codebooks {
    /// Assembles codebooks from raw centroids. `bits == 0` gives a single centroid per subspace.
    pub fn from_parts(subspaces: usize, sub_dim: usize, bits: u32, centroids: Vec<f32>) -> Result<Self> {
        if subspaces == 0 || sub_dim == 0 {
            return Err(Error::InvalidParameter("subspace count and width must be positive"));
        }
        if bits > MAX_BITS {
            return Err(Error::InvalidParameter("bits per subspace must be at most 16"));
        }
        let expected = subspaces * (1usize << bits) * sub_dim;
        if centroids.len() != expected {
            return Err(Error::mismatch("centroid value count", expected, centroids.len()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebooks"));
        }
        Ok(Self {
            subspaces,
            sub_dim,
            bits,
            centroids,
        })
    }

    /// Subspace count `m`.
    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.subspaces * self.sub_dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Centroids per subspace, `V = 2^b`.
    pub fn centroids_per_subspace(&self) -> usize {
        1usize << self.bits
    }

    /// Centroid `i` of subspace `j`.
    pub fn centroid(&self, j: usize, i: usize) -> &[f32] {
        let v = self.centroids_per_subspace();
        let start = (j * v + i) * self.sub_dim;
        &self.centroids[start..start + self.sub_dim]
    }

    /// All `V` centroids of subspace `j`, contiguous.
    pub fn subspace(&self, j: usize) -> &[f32] {
        let stride = self.centroids_per_subspace() * self.sub_dim;
        &self.centroids[j * stride..(j + 1) * stride]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.centroids
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::mismatch("descriptor dimension", self.dim(), len));
        }
        Ok(())
    }

    /// Index of the centroid of subspace `j` nearest to `sub`, lowest index on ties.
    pub fn nearest_centroid(&self, j: usize, sub: &[f32]) -> usize {
        let mut best = (f32::INFINITY, 0usize);
        for (i, c) in self.subspace(j).chunks_exact(self.sub_dim).enumerate() {
            let d = squared_l2(sub, c);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// One vector's `m` centroid indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PqCode(pub Vec<u16>);

impl PqCode {
    pub fn indices(&self) -> &[u16] {
        &self.0
    }

    /// Checks length `m` and every index `< V`.
    pub fn validate(&self, codebooks: &Codebooks) -> Result<()> {
        if self.0.len() != codebooks.subspaces {
            return Err(Error::mismatch("code length", codebooks.subspaces, self.0.len()));
        }
        let v = codebooks.centroids_per_subspace();
        for &i in &self.0 {
            if i as usize >= v {
                return Err(Error::IndexOutOfRange {
                    what: "centroid",
                    index: i as usize,
                    len: v,
                });
            }
        }
        Ok(())
    }
}

/// Per-subspace k-means training, with the WCSS trace of every subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCodebooks {
    pub codebooks: Codebooks,
    /// One within-cluster sum-of-squares history per subspace.
    pub wcss: Vec<Vec<f64>>,
}

fn check_pq_params(dim: usize, subspaces: usize, bits: u32) -> Result<()> {
    if subspaces == 0 || !dim.is_multiple_of(subspaces) {
        return Err(Error::InvalidParameter("subspace count must divide the dimension"));
    }
    if bits == 0 {
        return Err(Error::InvalidParameter("bits per subspace must be positive"));
    }
    if bits > MAX_BITS {
        return Err(Error::InvalidParameter("bits per subspace must be at most 16"));
    }
    Ok(())
}

/// Validates `(d, m, b)` without training anything.
pub fn validate_params(dim: usize, subspaces: usize, bits: u32) -> Result<()> {
    check_pq_params(dim, subspaces, bits)
}

/// Runs k-means on subspace `j` of the bank.
///
/// Subspace `j` draws from stream `j` of a ChaCha generator seeded with
/// `seed`, so subspaces can be trained in any order or in parallel.
pub fn train_subspace(
    bank: &MemoryBank,
    subspaces: usize,
    bits: u32,
    j: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeans> {
    check_pq_params(bank.dim(), subspaces, bits)?;
    if j >= subspaces {
        return Err(Error::IndexOutOfRange {
            what: "subspace",
            index: j,
            len: subspaces,
        });
    }
    let sub_dim = bank.dim() / subspaces;
    let mut sub = Vec::with_capacity(bank.len() * sub_dim);
    for x in bank.vectors() {
        sub.extend_from_slice(&x[j * sub_dim..(j + 1) * sub_dim]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    Ok(kmeans(&sub, sub_dim, 1usize << bits, max_iters, &mut rng))
}

/// Assembles codebooks from per-subspace k-means results, in subspace order.
pub fn codebooks_from_runs(runs: Vec<KMeans>, bits: u32) -> Result<TrainedCodebooks> {
    let subspaces = runs.len();
    let sub_dim = runs.first().ok_or(Error::Empty("k-means runs"))?.dim;
    let mut centroids = Vec::with_capacity(subspaces * (1usize << bits) * sub_dim);
    let mut wcss = Vec::with_capacity(subspaces);
    for km in runs {
        centroids.extend(km.centroids.iter().map(|&c| c as f32));
        wcss.push(km.wcss);
    }
    Ok(TrainedCodebooks {
        codebooks: Codebooks::from_parts(subspaces, sub_dim, bits, centroids)?,
        wcss,
    })
}

/// Learns `m` codebooks of `2^b` centroids each, independently per subspace.
pub fn train_codebooks_traced(
    bank: &MemoryBank,
    subspaces: usize,
    bits: u32,
    seed: u64,
    max_iters: usize,
) -> Result<TrainedCodebooks> {
    check_pq_params(bank.dim(), subspaces, bits)?;
    let runs = (0..subspaces)
        .map(|j| train_subspace(bank, subspaces, bits, j, seed, max_iters))
        .collect::<Result<Vec<_>>>()?;
    codebooks_from_runs(runs, bits)
}

pub fn train_codebooks(
    bank: &MemoryBank,
    subspaces: usize,
    bits: u32,
    seed: u64,
    max_iters: usize,
) -> Result<Codebooks> {
    train_codebooks_traced(bank, subspaces, bits, seed, max_iters).map(|t| t.codebooks)
}

/// Nearest centroid per subspace.
pub fn encode(x: &[f32], codebooks: &Codebooks) -> Result<PqCode> {
    codebooks.check_dim(x.len())?;
    let sd = codebooks.sub_dim;
    Ok(PqCode(
        (0..codebooks.subspaces)
            .map(|j| codebooks.nearest_centroid(j, &x[j * sd..(j + 1) * sd]) as u16)
            .collect(),
    ))
}

/// Concatenates the selected centroids into `out`.
pub fn decode_into(indices: &[u16], codebooks: &Codebooks, out: &mut [f32]) {
    let sd = codebooks.sub_dim;
    for (j, &i) in indices.iter().enumerate() {
        out[j * sd..(j + 1) * sd].copy_from_slice(codebooks.centroid(j, i as usize));
    }
}

/// Reconstructs `[c_1^{q_1}, …, c_m^{q_m}]`.
pub fn decode(code: &PqCode, codebooks: &Codebooks) -> Result<Vec<f32>> {
    code.validate(codebooks)?;
    let mut out = vec![0.0; codebooks.dim()];
    decode_into(&code.0, codebooks, &mut out);
    Ok(out)
}

/// Codebooks plus the `K` codes of the bank they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBank {
    codebooks: Codebooks,
    /// `K × m`, row-major.
    codes: Vec<u16>,
}

impl CompressedBank {
    pub fn from_parts(codebooks: Codebooks, codes: Vec<u16>) -> Result<Self> {
        let m = codebooks.subspaces;
        if codes.is_empty() {
            return Err(Error::Empty("code table"));
        }
        if !codes.len().is_multiple_of(m) {
            return Err(Error::mismatch("code value count", (codes.len() / m + 1) * m, codes.len()));
        }
        let v = codebooks.centroids_per_subspace();
        if let Some(&bad) = codes.iter().find(|&&i| i as usize >= v) {
            return Err(Error::IndexOutOfRange {
                what: "centroid",
                index: bad as usize,
                len: v,
            });
        }
        Ok(Self { codebooks, codes })
    }

    pub fn codebooks(&self) -> &Codebooks {
        &self.codebooks
    }

    /// Stored vector count `K`.
    pub fn len(&self) -> usize {
        self.codes.len() / self.codebooks.subspaces
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.codebooks.dim()
    }

    pub fn code(&self, i: usize) -> &[u16] {
        let m = self.codebooks.subspaces;
        &self.codes[i * m..(i + 1) * m]
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Reconstruction of bank vector `i`.
    pub fn decode_vector(&self, i: usize, out: &mut [f32]) {
        decode_into(self.code(i), &self.codebooks, out);
    }

    /// Reconstructs every vector into a plain bank.
    pub fn decode_all(&self) -> MemoryBank {
        let d = self.dim();
        let mut data = vec![0.0; self.len() * d];
        for (i, out) in data.chunks_exact_mut(d).enumerate() {
            self.decode_vector(i, out);
        }
        MemoryBank::from_vectors(d, data).expect("decoded centroids are finite and non-empty")
    }

    pub fn storage_report(&self) -> StorageReport {
        storage_report(self.len(), self.dim(), self.codebooks.subspaces, self.codebooks.bits)
    }
}

/// Trains codebooks on the bank and encodes every bank vector with them.
pub fn compress_bank(
    bank: &MemoryBank,
    subspaces: usize,
    bits: u32,
    seed: u64,
    max_iters: usize,
) -> Result<CompressedBank> {
    let codebooks = train_codebooks(bank, subspaces, bits, seed, max_iters)?;
    encode_bank(bank, codebooks)
}

/// Encodes every bank vector with existing codebooks.
pub fn encode_bank(bank: &MemoryBank, codebooks: Codebooks) -> Result<CompressedBank> {
    let mut codes = Vec::with_capacity(bank.len() * codebooks.subspaces());
    for x in bank.vectors() {
        codes.extend(encode(x, &codebooks)?.0);
    }
    CompressedBank::from_parts(codebooks, codes)
}

/// Bytes of one bit-packed code row, `ceil(m·b / 8)`.
pub fn code_row_bytes(subspaces: usize, bits: u32) -> usize {
    (subspaces * bits as usize).div_ceil(8)
}

/// Packs `indices` LSB-first, `bits` per index, into `out` (`code_row_bytes` long).
pub fn pack_code(indices: &[u16], bits: u32, out: &mut [u8]) {
    out.iter_mut().for_each(|b| *b = 0);
    let mut bit = 0usize;
    for &idx in indices {
        for k in 0..bits as usize {
            if (idx >> k) & 1 == 1 {
                out[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
}

/// Inverse of [`pack_code`].
pub fn unpack_code(bytes: &[u8], subspaces: usize, bits: u32, out: &mut Vec<u16>) {
    let mut bit = 0usize;
    for _ in 0..subspaces {
        let mut idx = 0u16;
        for k in 0..bits as usize {
            if (bytes[bit / 8] >> (bit % 8)) & 1 == 1 {
                idx |= 1 << k;
            }
            bit += 1;
        }
        out.push(idx);
    }
}

/// Analytic storage cost of a compressed bank, payload only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub vectors: usize,
    pub dim: usize,
    pub subspaces: usize,
    pub bits: u32,
    /// `ceil(m·b·K / 8)`: the pure bit count of all indices.
    pub index_bytes: usize,
    /// `K · ceil(m·b / 8)`: indices as serialized, one whole-byte row per vector.
    pub packed_index_bytes: usize,
    /// `4 · V · d`
    pub codebook_bytes: usize,
    /// `index_bytes + codebook_bytes`
    pub total_bytes: usize,
    /// `4 · K · d`: the uncompressed bank.
    pub raw_bytes: usize,
    /// `raw_bytes / total_bytes`
    pub ratio: f64,
    /// `raw_bytes / index_bytes`
    pub index_ratio: f64,
}

pub fn storage_report(vectors: usize, dim: usize, subspaces: usize, bits: u32) -> StorageReport {
    let v = 1usize << bits;
    let index_bytes = (subspaces * bits as usize * vectors).div_ceil(8);
    let packed_index_bytes = vectors * code_row_bytes(subspaces, bits);
    let codebook_bytes = 4 * v * dim;
    let total_bytes = index_bytes + codebook_bytes;
    let raw_bytes = 4 * vectors * dim;
    StorageReport {
        vectors,
        dim,
        subspaces,
        bits,
        index_bytes,
        packed_index_bytes,
        codebook_bytes,
        total_bytes,
        raw_bytes,
        ratio: raw_bytes as f64 / total_bytes as f64,
        index_ratio: raw_bytes as f64 / index_bytes as f64,
    }
}
