//! Patch score grids, pixel-level anomaly maps and image-level scores.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default Gaussian smoothing of pixel maps, in pixels.
pub const DEFAULT_SIGMA: f64 = 4.0;

/// A row-major grid of non-negative finite scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ScoreGrid {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Empty("score grid"));
        }
        if values.len() != height * width {
            return Err(Error::mismatch("score count", height * width, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score grid"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("scores must be non-negative"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.width + j]
    }
}

/// Patch scores with the derived image score and optional pixel map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub patch_scores: ScoreGrid,
    pub pixel_map: Option<ScoreGrid>,
    pub image_score: f32,
}

impl ScoreMap {
    /// Wraps patch scores; the image score is their maximum.
    pub fn from_patches(patch_scores: ScoreGrid) -> Self {
        let image_score = max_score(patch_scores.values());
        Self {
            patch_scores,
            pixel_map: None,
            image_score,
        }
    }

    /// Upsamples to `(height, width)` and blurs with `sigma` to fill the pixel map.
    pub fn with_pixel_map(mut self, height: usize, width: usize, sigma: f64) -> Result<Self> {
        let up = upsample_scores(&self.patch_scores, height, width)?;
        self.pixel_map = Some(smooth(&up, sigma)?);
        Ok(self)
    }
}

fn max_score(values: &[f32]) -> f32 {
    values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Image-level score: the maximum patch score.
pub fn image_score(patch_scores: &[f32]) -> Result<f32> {
    if patch_scores.is_empty() {
        return Err(Error::Empty("patch scores"));
    }
    Ok(max_score(patch_scores))
}

/// Source coordinate and blend weight for half-pixel-centred resampling.
fn bilinear_taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (libm::floor(pos) as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, (pos - lo as f64).min(1.0) as f32)
}

/// Bilinear resize of a patch grid to pixel resolution.
///
/// Uses pixel-centre alignment with clamped borders, so a constant grid stays
/// constant and a `1 × 1` grid fills the target.
pub fn upsample_scores(grid: &ScoreGrid, target_h: usize, target_w: usize) -> Result<ScoreGrid> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidParameter("target size must be positive"));
    }
    if target_h < grid.height || target_w < grid.width {
        return Err(Error::InvalidParameter(
            "target size must not be smaller than the patch grid",
        ));
    }
    let cols: Vec<_> = (0..target_w)
        .map(|x| bilinear_taps(x, grid.width, target_w))
        .collect();
    let mut out = Vec::with_capacity(target_h * target_w);
    for y in 0..target_h {
        let (r0, r1, wy) = bilinear_taps(y, grid.height, target_h);
        for &(c0, c1, wx) in &cols {
            let top = grid.get(r0, c0) * (1.0 - wx) + grid.get(r0, c1) * wx;
            let bottom = grid.get(r1, c0) * (1.0 - wx) + grid.get(r1, c1) * wx;
            out.push((top * (1.0 - wy) + bottom * wy).max(0.0));
        }
    }
    ScoreGrid::new(target_h, target_w, out)
}

/// Normalised 1-D Gaussian kernel truncated at four standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(4.0 * sigma) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            libm::exp(-0.5 * x * x / (sigma * sigma))
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Mirror index into `[0, n)` with the edge sample repeated (`d c b a | a b c d`).
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period);
    if r < n as isize {
        r as usize
    } else {
        (period - 1 - r) as usize
    }
}

fn convolve_axis(src: &[f64], dst: &mut [f64], len: usize, stride: usize, count: usize, outer: usize, kernel: &[f64]) {
    let radius = (kernel.len() / 2) as isize;
    for o in 0..count {
        let base = o * outer;
        for i in 0..len {
            let mut acc = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                let s = reflect(i as isize + t as isize - radius, len);
                acc += w * src[base + s * stride];
            }
            dst[base + i * stride] = acc;
        }
    }
}

/// Separable Gaussian blur with reflective borders. `sigma == 0` is the identity.
pub fn smooth(map: &ScoreGrid, sigma: f64) -> Result<ScoreGrid> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be finite and >= 0"));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let (h, w) = (map.height, map.width);
    let src: Vec<f64> = map.values.iter().map(|&v| v as f64).collect();
    let mut tmp = vec![0.0; h * w];
    // rows: contiguous, stride 1; each row starts at r*w
    convolve_axis(&src, &mut tmp, w, 1, h, w, &kernel);
    let mut out = vec![0.0; h * w];
    // columns: stride w; each column starts at c
    convolve_axis(&tmp, &mut out, h, w, w, 1, &kernel);
    ScoreGrid::new(h, w, out.into_iter().map(|v| (v as f32).max(0.0)).collect())
}

/// Result of min-max scaling a set of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f32>,
    /// Set when every input was equal; values are then all zero.
    pub degenerate: bool,
}

/// Rescales scores to `[0, 1]` with `(s − min) / (max − min)`.
pub fn minmax_normalize(scores: &[f32]) -> Result<Normalized> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    let lo = scores.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = max_score(scores);
    if hi <= lo {
        return Ok(Normalized {
            values: vec![0.0; scores.len()],
            degenerate: true,
        });
    }
    let span = (hi - lo) as f64;
    Ok(Normalized {
        values: scores
            .iter()
            .map(|&s| ((s - lo) as f64 / span) as f32)
            .collect(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, v: &[f32]) -> ScoreGrid {
        ScoreGrid::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn image_score_is_max() {
        assert_eq!(image_score(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(image_score(&[1., 2., 7., 3.]).unwrap(), 7.0);
        assert_eq!(image_score(&[]), Err(Error::Empty("patch scores")));
    }

    #[test]
    fn upsample_constant_and_single() {
        let up = upsample_scores(&grid(2, 3, &[2.5; 6]), 7, 9).unwrap();
        assert!(up.values().iter().all(|&v| v == 2.5));
        let up = upsample_scores(&grid(1, 1, &[3.0]), 4, 5).unwrap();
        assert!(up.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn upsample_two_to_four() {
        // centres at -0.25, 0.25, 0.75, 1.25 in source coordinates, clamped
        let up = upsample_scores(&grid(2, 1, &[0.0, 1.0]), 4, 1).unwrap();
        assert_eq!(up.values(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_rejects_bad_targets() {
        let g = grid(2, 2, &[0.0; 4]);
        assert!(upsample_scores(&g, 0, 4).is_err());
        assert!(upsample_scores(&g, 1, 4).is_err());
    }

    #[test]
    fn smooth_identity_and_constant() {
        let g = grid(2, 2, &[1., 2., 3., 4.]);
        assert_eq!(smooth(&g, 0.0).unwrap(), g);
        let c = grid(5, 6, &[0.75; 30]);
        for v in smooth(&c, 2.0).unwrap().values() {
            assert!((v - 0.75).abs() < 1e-6);
        }
        assert!(smooth(&g, -1.0).is_err());
    }

    #[test]
    fn impulse_centre_weight() {
        let mut v = vec![0.0f32; 21 * 21];
        v[10 * 21 + 10] = 1.0;
        let out = smooth(&grid(21, 21, &v), 1.0).unwrap();
        let norm: f64 = (-4..=4).map(|k: i32| libm::exp(-0.5 * (k * k) as f64)).sum();
        let centre = 1.0 / (norm * norm);
        assert!((out.get(10, 10) as f64 - centre).abs() < 1e-7);
        let sum: f32 = out.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smooth_preserves_sum_with_reflection() {
        let v: Vec<f32> = (0..48).map(|i| ((i * 7919) % 13) as f32).collect();
        let g = grid(6, 8, &v);
        let before: f64 = v.iter().map(|&x| x as f64).sum();
        let after: f64 = smooth(&g, 1.5).unwrap().values().iter().map(|&x| x as f64).sum();
        assert!((before - after).abs() <= 1e-6 * before);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 4), 1);
    }

    #[test]
    fn minmax_cases() {
        assert_eq!(minmax_normalize(&[2.0, 4.0]).unwrap().values, vec![0.0, 1.0]);
        let flat = minmax_normalize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(flat.values, vec![0.0; 3]);
        assert!(flat.degenerate);
        assert!(minmax_normalize(&[]).is_err());
    }

    #[test]
    fn score_map_uses_raw_patch_max() {
        let map = ScoreMap::from_patches(grid(2, 2, &[1., 2., 7., 3.]))
            .with_pixel_map(8, 8, 4.0)
            .unwrap();
        assert_eq!(map.image_score, 7.0);
        let pixel_max = map.pixel_map.unwrap().values().iter().copied().fold(0.0, f32::max);
        assert!(pixel_max < 7.0);
    }
}
