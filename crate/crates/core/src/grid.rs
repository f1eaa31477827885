//! Patch descriptor grids and multi-scale concatenation.
//!
//! Descriptors are stored row-major: row `i` outer, column `j` inner, channel
//! innermost. Every downstream module (banks, codes, score maps) inherits this
//! ordering, so patch index `i * width + j` is stable across the pipeline.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One backbone layer's activation map, `height × width × depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMap {
    pub layer_id: u32,
    height: usize,
    width: usize,
    depth: usize,
    values: Vec<f32>,
}

impl LayerMap {
    pub fn new(
        layer_id: u32,
        height: usize,
        width: usize,
        depth: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::InvalidParameter("layer dimensions must be positive"));
        }
        if values.len() != height * width * depth {
            return Err(Error::mismatch(
                "layer value count",
                height * width * depth,
                values.len(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer map"));
        }
        Ok(Self {
            layer_id,
            height,
            width,
            depth,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn at(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.width + j) * self.depth;
        &self.values[start..start + self.depth]
    }
}

/// An `H* × W*` grid of `d`-dimensional patch descriptors for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureGrid {
    /// Builds a grid from row-major descriptor values, checking shape and finiteness.
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::InvalidParameter("grid dimensions must be positive"));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(dim))
            .ok_or(Error::InvalidParameter("grid dimensions overflow"))?;
        if data.len() != expected {
            return Err(Error::mismatch("grid value count", expected, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature grid"));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of patch positions, `H* · W*`.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.dim)
    }

    /// Descriptor at flat position `p = i * width + j`.
    pub fn patch(&self, p: usize) -> &[f32] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn patch_at(&self, i: usize, j: usize) -> &[f32] {
        self.patch(i * self.width + j)
    }

    pub fn patch_mut(&mut self, p: usize) -> &mut [f32] {
        &mut self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn patches(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

/// Maps fine index `i` of a length-`fine` axis onto a length-`coarse` axis.
fn nearest_source(i: usize, fine: usize, coarse: usize) -> usize {
    (i * coarse) / fine
}

/// Concatenates layer maps along the channel axis at the first layer's resolution.
///
/// Coarser layers are upsampled by nearest-neighbour replication. Channel
/// order follows the input order, so the output dimension is the sum of depths.
pub fn concat_multiscale(layers: &[LayerMap]) -> Result<FeatureGrid> {
    let first = layers.first().ok_or(Error::Empty("layer list"))?;
    let (height, width) = (first.height, first.width);
    if layers
        .iter()
        .any(|l| l.height > height || l.width > width)
    {
        return Err(Error::InvalidParameter(
            "layer resolution exceeds the first layer's",
        ));
    }
    let dim: usize = layers.iter().map(|l| l.depth).sum();
    let mut data = Vec::with_capacity(height * width * dim);
    for i in 0..height {
        for j in 0..width {
            for layer in layers {
                let si = nearest_source(i, height, layer.height);
                let sj = nearest_source(j, width, layer.width);
                data.extend_from_slice(layer.at(si, sj));
            }
        }
    }
    FeatureGrid::new(height, width, dim, data)
}
