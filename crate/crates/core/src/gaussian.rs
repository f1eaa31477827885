//! Per-position Gaussian models scored by Mahalanobis distance.
//!
//! [`FullGaussianGrid`] keeps a full covariance and its precision matrix for
//! every patch position: `O(d²·N + d³)` to fit and `O(d²)` per query.
//! [`DiagGaussianGrid`] keeps only the variance vector, which turns the
//! distance into an element-wise weighted sum: `O(d·N)` to fit and `O(d)`
//! per query.
//!
//! Both estimators use the unbiased `1/(N-1)` normalisation and add the
//! regulariser unconditionally. Statistics are accumulated in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::anomaly_map::ScoreGrid;
use crate::counter::{Counter, NoCount};
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;

/// Default variance floor and covariance ridge.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Per-position sample means and unbiased covariances before regularisation.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub samples: usize,
    /// `positions × dim`
    pub mean: Vec<f64>,
    /// `positions × dim × dim`
    pub covariance: Vec<f64>,
}

fn check_training_set(grids: &[FeatureGrid]) -> Result<(usize, usize, usize)> {
    if grids.len() < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            found: grids.len(),
        });
    }
    let shape = grids[0].shape();
    for g in grids {
        let (h, w, d) = g.shape();
        if h != shape.0 {
            return Err(Error::mismatch("grid height", shape.0, h));
        }
        if w != shape.1 {
            return Err(Error::mismatch("grid width", shape.1, w));
        }
        if d != shape.2 {
            return Err(Error::mismatch("descriptor dimension", shape.2, d));
        }
    }
    Ok(shape)
}

fn position_means(grids: &[FeatureGrid], positions: usize, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0f64; positions * dim];
    for g in grids {
        for (acc, &v) in mean.iter_mut().zip(g.as_slice()) {
            *acc += v as f64;
        }
    }
    let n = grids.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Two-pass per-position mean and unbiased covariance.
pub fn estimate_covariance(grids: &[FeatureGrid]) -> Result<CovarianceEstimate> {
    let (height, width, dim) = check_training_set(grids)?;
    let positions = height * width;
    let mean = position_means(grids, positions, dim);
    let mut covariance = vec![0.0f64; positions * dim * dim];
    let mut diff = vec![0.0f64; dim];
    for g in grids {
        for p in 0..positions {
            let mu = &mean[p * dim..(p + 1) * dim];
            for ((dst, &x), &m) in diff.iter_mut().zip(g.patch(p)).zip(mu) {
                *dst = x as f64 - m;
            }
            let cov = &mut covariance[p * dim * dim..(p + 1) * dim * dim];
            for r in 0..dim {
                for c in r..dim {
                    cov[r * dim + c] += diff[r] * diff[c];
                }
            }
        }
    }
    let denom = (grids.len() - 1) as f64;
    for cov in covariance.chunks_exact_mut(dim * dim) {
        for r in 0..dim {
            for c in r..dim {
                let v = cov[r * dim + c] / denom;
                cov[r * dim + c] = v;
                cov[c * dim + r] = v;
            }
        }
    }
    Ok(CovarianceEstimate {
        height,
        width,
        dim,
        samples: grids.len(),
        mean,
        covariance,
    })
}

/// Lower Cholesky factor of a symmetric `d × d` matrix, or `None` if not positive definite.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !s.is_finite() || s <= 0.0 {
                    return None;
                }
                l[i * d + i] = libm::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub(crate) fn invert_spd(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, d)?;
    // inverse of the lower factor by forward substitution, column by column
    let mut linv = vec![0.0f64; d * d];
    for col in 0..d {
        for i in col..d {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i * d + k] * linv[k * d + col];
            }
            linv[i * d + col] = s / l[i * d + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0f64; d * d];
    for r in 0..d {
        for c in r..d {
            let start = r.max(c);
            let s: f64 = (start..d).map(|k| linv[k * d + r] * linv[k * d + c]).sum();
            inv[r * d + c] = s;
            inv[c * d + r] = s;
        }
    }
    Some(inv)
}

/// Full-covariance Gaussian per patch position.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGaussianGrid {
    height: usize,
    width: usize,
    dim: usize,
    epsilon: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    precision: Vec<f64>,
}

impl FullGaussianGrid {
    /// Builds a model from means and covariances, inverting every covariance.
    pub fn from_covariance(
        height: usize,
        width: usize,
        dim: usize,
        epsilon: f64,
        mean: Vec<f64>,
        covariance: Vec<f64>,
    ) -> Result<Self> {
        let positions = height * width;
        if mean.len() != positions * dim {
            return Err(Error::mismatch("mean length", positions * dim, mean.len()));
        }
        if covariance.len() != positions * dim * dim {
            return Err(Error::mismatch(
                "covariance length",
                positions * dim * dim,
                covariance.len(),
            ));
        }
        let mut precision = Vec::with_capacity(covariance.len());
        for (p, cov) in covariance.chunks_exact(dim * dim).enumerate() {
            let inv = invert_spd(cov, dim).ok_or(Error::SingularCovariance { position: p })?;
            precision.extend_from_slice(&inv);
        }
        Ok(Self {
            height,
            width,
            dim,
            epsilon,
            mean,
            covariance,
            precision,
        })
    }

    /// Reassembles a model whose precision matrices were computed earlier.
    pub fn from_parts(
        height: usize,
        width: usize,
        dim: usize,
        epsilon: f64,
        mean: Vec<f64>,
        covariance: Vec<f64>,
        precision: Vec<f64>,
    ) -> Result<Self> {
        let positions = height * width;
        if mean.len() != positions * dim {
            return Err(Error::mismatch("mean length", positions * dim, mean.len()));
        }
        for (what, len) in [("covariance length", covariance.len()), ("precision length", precision.len())] {
            if len != positions * dim * dim {
                return Err(Error::mismatch(what, positions * dim * dim, len));
            }
        }
        Ok(Self {
            height,
            width,
            dim,
            epsilon,
            mean,
            covariance,
            precision,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.dim)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self, p: usize) -> &[f64] {
        &self.mean[p * self.dim..(p + 1) * self.dim]
    }

    pub fn covariance(&self, p: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.covariance[p * dd..(p + 1) * dd]
    }

    pub fn precision(&self, p: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.precision[p * dd..(p + 1) * dd]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariances(&self) -> &[f64] {
        &self.covariance
    }

    pub fn precisions(&self) -> &[f64] {
        &self.precision
    }
}

/// Diagonal-covariance Gaussian per patch position.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussianGrid {
    height: usize,
    width: usize,
    dim: usize,
    epsilon: f64,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl DiagGaussianGrid {
    pub fn from_parts(
        height: usize,
        width: usize,
        dim: usize,
        epsilon: f64,
        mean: Vec<f64>,
        variance: Vec<f64>,
    ) -> Result<Self> {
        let n = height * width * dim;
        if mean.len() != n {
            return Err(Error::mismatch("mean length", n, mean.len()));
        }
        if variance.len() != n {
            return Err(Error::mismatch("variance length", n, variance.len()));
        }
        if variance.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::InvalidParameter("variances must be positive and finite"));
        }
        Ok(Self {
            height,
            width,
            dim,
            epsilon,
            mean,
            variance,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.dim)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self, p: usize) -> &[f64] {
        &self.mean[p * self.dim..(p + 1) * self.dim]
    }

    pub fn variance(&self, p: usize) -> &[f64] {
        &self.variance[p * self.dim..(p + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variance
    }
}

/// Fits the full-covariance baseline with `regularizer · I` added to every covariance.
pub fn fit_full(grids: &[FeatureGrid], regularizer: f64) -> Result<FullGaussianGrid> {
    if !regularizer.is_finite() || regularizer < 0.0 {
        return Err(Error::InvalidParameter("regularizer must be finite and >= 0"));
    }
    let est = estimate_covariance(grids)?;
    let mut covariance = est.covariance;
    let d = est.dim;
    for cov in covariance.chunks_exact_mut(d * d) {
        for k in 0..d {
            cov[k * d + k] += regularizer;
        }
    }
    FullGaussianGrid::from_covariance(est.height, est.width, d, regularizer, est.mean, covariance)
}

/// Fits the diagonal model: unbiased per-dimension variance plus `epsilon`.
pub fn fit_diag(grids: &[FeatureGrid], epsilon: f64) -> Result<DiagGaussianGrid> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be finite and > 0"));
    }
    let (height, width, dim) = check_training_set(grids)?;
    let positions = height * width;
    let mean = position_means(grids, positions, dim);
    let mut variance = vec![0.0f64; positions * dim];
    for g in grids {
        for ((acc, &x), &m) in variance.iter_mut().zip(g.as_slice()).zip(&mean) {
            let diff = x as f64 - m;
            *acc += diff * diff;
        }
    }
    let denom = (grids.len() - 1) as f64;
    variance.iter_mut().for_each(|v| *v = *v / denom + epsilon);
    DiagGaussianGrid::from_parts(height, width, dim, epsilon, mean, variance)
}

fn check_query(x: &[f32], p: usize, shape: (usize, usize, usize)) -> Result<()> {
    let (h, w, d) = shape;
    if x.len() != d {
        return Err(Error::mismatch("descriptor dimension", d, x.len()));
    }
    if p >= h * w {
        return Err(Error::IndexOutOfRange {
            what: "position",
            index: p,
            len: h * w,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("query descriptor"));
    }
    Ok(())
}

pub(crate) fn full_distance<C: Counter>(
    x: &[f32],
    p: usize,
    model: &FullGaussianGrid,
    counter: &mut C,
) -> f64 {
    let d = model.dim;
    let diff: Vec<f64> = x
        .iter()
        .zip(model.mean(p))
        .map(|(&v, &m)| v as f64 - m)
        .collect();
    let prec = model.precision(p);
    let mut total = 0.0;
    for (r, &dr) in diff.iter().enumerate() {
        let row = &prec[r * d..(r + 1) * d];
        let projected: f64 = row.iter().zip(&diff).map(|(a, b)| a * b).sum();
        total += dr * projected;
    }
    counter.add((d * d + d) as u64);
    total.max(0.0)
}

pub(crate) fn diag_distance<C: Counter>(
    x: &[f32],
    p: usize,
    model: &DiagGaussianGrid,
    counter: &mut C,
) -> f64 {
    let total = x
        .iter()
        .zip(model.mean(p))
        .zip(model.variance(p))
        .map(|((&v, &m), &var)| {
            let diff = v as f64 - m;
            diff * diff / var
        })
        .sum();
    counter.add(model.dim as u64);
    total
}

/// `(x−μ)ᵀ Σ⁻¹ (x−μ)` at flat position `p`.
pub fn mahalanobis_full(x: &[f32], p: usize, model: &FullGaussianGrid) -> Result<f64> {
    check_query(x, p, model.shape())?;
    Ok(full_distance(x, p, model, &mut NoCount))
}

/// `Σ_k (x_k−μ_k)² / σ²_k` at flat position `p`.
pub fn mahalanobis_diag(x: &[f32], p: usize, model: &DiagGaussianGrid) -> Result<f64> {
    check_query(x, p, model.shape())?;
    Ok(diag_distance(x, p, model, &mut NoCount))
}

/// A fitted per-position Gaussian model that can score one descriptor.
pub trait GaussianModel {
    fn shape(&self) -> (usize, usize, usize);

    /// Mahalanobis distance at flat position `p`, tallying multiplies into `counter`.
    fn distance_counted<C: Counter>(&self, x: &[f32], p: usize, counter: &mut C) -> Result<f64>;

    fn distance(&self, x: &[f32], p: usize) -> Result<f64> {
        self.distance_counted(x, p, &mut NoCount)
    }
}

impl GaussianModel for FullGaussianGrid {
    fn shape(&self) -> (usize, usize, usize) {
        FullGaussianGrid::shape(self)
    }

    fn distance_counted<C: Counter>(&self, x: &[f32], p: usize, counter: &mut C) -> Result<f64> {
        check_query(x, p, self.shape())?;
        Ok(full_distance(x, p, self, counter))
    }
}

impl GaussianModel for DiagGaussianGrid {
    fn shape(&self) -> (usize, usize, usize) {
        DiagGaussianGrid::shape(self)
    }

    fn distance_counted<C: Counter>(&self, x: &[f32], p: usize, counter: &mut C) -> Result<f64> {
        check_query(x, p, self.shape())?;
        Ok(diag_distance(x, p, self, counter))
    }
}

/// Scores every patch of `grid` against the model at the same position.
pub fn score_grid<M: GaussianModel>(grid: &FeatureGrid, model: &M) -> Result<ScoreGrid> {
    score_grid_counted(grid, model, &mut NoCount)
}

pub fn score_grid_counted<M: GaussianModel, C: Counter>(
    grid: &FeatureGrid,
    model: &M,
    counter: &mut C,
) -> Result<ScoreGrid> {
    let (h, w, d) = model.shape();
    if grid.shape() != (h, w, d) {
        if grid.dim() != d {
            return Err(Error::mismatch("descriptor dimension", d, grid.dim()));
        }
        return Err(Error::mismatch("grid positions", h * w, grid.len()));
    }
    let values = grid
        .patches()
        .enumerate()
        .map(|(p, x)| model.distance_counted(x, p, counter).map(|s| s as f32))
        .collect::<Result<Vec<_>>>()?;
    ScoreGrid::new(h, w, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_grids(points: &[&[f32]]) -> Vec<FeatureGrid> {
        points
            .iter()
            .map(|p| FeatureGrid::new(1, 1, p.len(), p.to_vec()).unwrap())
            .collect()
    }

    fn random_grids(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, d: usize) -> Vec<FeatureGrid> {
        (0..n)
            .map(|_| {
                let data = (0..h * w * d).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
                FeatureGrid::new(h, w, d, data).unwrap()
            })
            .collect()
    }

    /// Textbook covariance: E[(x-μ)(x-μ)ᵀ] summed over samples in the naive order.
    fn brute_covariance(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = samples.len();
        let d = samples[0].len();
        let mut mu = vec![0.0; d];
        for s in samples {
            for k in 0..d {
                mu[k] += s[k];
            }
        }
        for m in &mut mu {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for s in samples {
                    acc += (s[r] - mu[r]) * (s[c] - mu[c]);
                }
                cov[r * d + c] = acc / (n - 1) as f64;
            }
        }
        (mu, cov)
    }

    #[test]
    fn identical_samples_give_ridge_only() {
        let grids = vec![FeatureGrid::new(2, 1, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap(); 4];
        let model = fit_full(&grids, 0.01).unwrap();
        for p in 0..2 {
            let cov = model.covariance(p);
            for r in 0..3 {
                for c in 0..3 {
                    let expected = if r == c { 0.01 } else { 0.0 };
                    assert_eq!(cov[r * 3 + c], expected);
                }
            }
        }
    }

    #[test]
    fn three_point_covariance() {
        let grids = point_grids(&[&[1., 2.], &[3., 4.], &[5., 6.]]);
        let est = estimate_covariance(&grids).unwrap();
        assert_eq!(est.mean, vec![3., 4.]);
        assert_eq!(est.covariance, vec![4., 4., 4., 4.]);
        // rank one, so the unregularised fit cannot be inverted
        assert_eq!(
            fit_full(&grids, 0.0),
            Err(Error::SingularCovariance { position: 0 })
        );
    }

    #[test]
    fn covariance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grids = random_grids(&mut rng, 50, 1, 1, 3);
        let samples: Vec<Vec<f64>> = grids
            .iter()
            .map(|g| g.as_slice().iter().map(|&v| v as f64).collect())
            .collect();
        let (mu, cov) = brute_covariance(&samples);
        let model = fit_full(&grids, 0.0).unwrap();
        for (a, b) in model.mean(0).iter().zip(&mu) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in model.covariance(0).iter().zip(&cov) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn precision_inverts_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grids = random_grids(&mut rng, 20, 2, 2, 6);
        let model = fit_full(&grids, 0.01).unwrap();
        for p in 0..4 {
            let (cov, prec) = (model.covariance(p), model.precision(p));
            for r in 0..6 {
                for c in 0..6 {
                    let v: f64 = (0..6).map(|k| cov[r * 6 + k] * prec[k * 6 + c]).sum();
                    let expected = if r == c { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-4);
                    assert_eq!(cov[r * 6 + c], cov[c * 6 + r]);
                }
            }
        }
    }

    #[test]
    fn diag_three_points() {
        let grids = point_grids(&[&[1., 2.], &[3., 4.], &[5., 6.]]);
        let model = fit_diag(&grids, 0.01).unwrap();
        assert_eq!(model.mean(0), &[3., 4.]);
        assert_eq!(model.variance(0), &[4.01, 4.01]);
    }

    #[test]
    fn diag_zero_variance_floor() {
        let grids = point_grids(&[&[1., 1., 1.], &[1., 1., 1.]]);
        let model = fit_diag(&grids, 0.01).unwrap();
        assert_eq!(model.variance(0), &[0.01, 0.01, 0.01]);
    }

    #[test]
    fn diag_is_covariance_diagonal_plus_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grids = random_grids(&mut rng, 30, 2, 3, 5);
        let full = fit_full(&grids, 0.0).unwrap();
        let diag = fit_diag(&grids, 0.01).unwrap();
        for p in 0..6 {
            for k in 0..5 {
                let expected = full.covariance(p)[k * 5 + k] + 0.01;
                assert!((diag.variance(p)[k] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fit_errors() {
        let one = point_grids(&[&[1., 2.]]);
        assert_eq!(
            fit_diag(&one, 0.01),
            Err(Error::TooFewSamples {
                required: 2,
                found: 1
            })
        );
        assert!(fit_full(&one, 0.01).is_err());
        let two = point_grids(&[&[1., 2.], &[2., 3.]]);
        assert!(matches!(fit_diag(&two, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(fit_diag(&two, -1.0), Err(Error::InvalidParameter(_))));
        let mixed = point_grids(&[&[1., 2.], &[2., 3., 4.]]);
        assert!(matches!(fit_diag(&mixed, 0.01), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn full_distance_cases() {
        let model = FullGaussianGrid::from_covariance(
            1,
            1,
            2,
            0.0,
            vec![1.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(mahalanobis_full(&[1.0, 1.0], 0, &model).unwrap(), 0.0);
        assert_eq!(mahalanobis_full(&[4.0, 5.0], 0, &model).unwrap(), 25.0);
        assert!(matches!(
            mahalanobis_full(&[4.0], 0, &model),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    /// Solves Σ y = diff by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<f64>, mut b: Vec<f64>, d: usize) -> Vec<f64> {
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).unwrap())
                .unwrap();
            for k in 0..d {
                a.swap(col * d + k, pivot * d + k);
            }
            b.swap(col, pivot);
            for row in col + 1..d {
                let f = a[row * d + col] / a[col * d + col];
                for k in col..d {
                    a[row * d + k] -= f * a[col * d + k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut y = vec![0.0; d];
        for row in (0..d).rev() {
            let s: f64 = (row + 1..d).map(|k| a[row * d + k] * y[k]).sum();
            y[row] = (b[row] - s) / a[row * d + row];
        }
        y
    }

    #[test]
    fn full_distance_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grids = random_grids(&mut rng, 12, 1, 1, 4);
        let model = fit_full(&grids, 0.01).unwrap();
        for _ in 0..20 {
            let x: Vec<f32> = (0..4).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
            let diff: Vec<f64> = x.iter().zip(model.mean(0)).map(|(&a, &m)| a as f64 - m).collect();
            let y = solve(model.covariance(0).to_vec(), diff.clone(), 4);
            let oracle: f64 = diff.iter().zip(&y).map(|(a, b)| a * b).sum();
            let got = mahalanobis_full(&x, 0, &model).unwrap();
            assert!((got - oracle).abs() <= 1e-8 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn diag_distance_cases() {
        let model =
            DiagGaussianGrid::from_parts(1, 1, 2, 0.01, vec![3.0, 4.0], vec![4.0, 4.0]).unwrap();
        assert_eq!(mahalanobis_diag(&[3.0, 4.0], 0, &model).unwrap(), 0.0);
        assert_eq!(mahalanobis_diag(&[5.0, 4.0], 0, &model).unwrap(), 1.0);
        assert!(mahalanobis_diag(&[5.0, 4.0], 1, &model).is_err());
    }

    #[test]
    fn diag_equals_full_on_diagonal_covariance() {
        let var = vec![0.5, 2.0, 3.25];
        let mean = vec![1.0, -1.0, 0.5];
        let mut cov = vec![0.0; 9];
        for k in 0..3 {
            cov[k * 3 + k] = var[k];
        }
        let full = FullGaussianGrid::from_covariance(1, 1, 3, 0.0, mean.clone(), cov).unwrap();
        let diag = DiagGaussianGrid::from_parts(1, 1, 3, 0.0, mean, var).unwrap();
        let x = [2.0f32, 0.25, -1.5];
        let a = mahalanobis_full(&x, 0, &full).unwrap();
        let b = mahalanobis_diag(&x, 0, &diag).unwrap();
        assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn score_grid_locality_and_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grids = random_grids(&mut rng, 10, 3, 3, 4);
        let model = fit_diag(&grids, 0.01).unwrap();
        let means: Vec<f32> = model.means().iter().map(|&m| m as f32).collect();
        let at_mean = FeatureGrid::new(3, 3, 4, means.clone()).unwrap();
        // f32 rounding of the mean keeps the scores tiny rather than exactly zero
        let s = score_grid(&at_mean, &model).unwrap();
        assert!(s.values().iter().all(|&v| v < 1e-9));

        let exact = DiagGaussianGrid::from_parts(
            3,
            3,
            4,
            0.01,
            means.iter().map(|&m| m as f64).collect(),
            model.variances().to_vec(),
        )
        .unwrap();
        assert!(score_grid(&at_mean, &exact).unwrap().values().iter().all(|&v| v == 0.0));
        let mut shifted = at_mean.clone();
        shifted.patch_mut(4)[2] += 1.0;
        let s = score_grid(&shifted, &exact).unwrap();
        let nonzero: Vec<usize> = (0..9).filter(|&p| s.values()[p] != 0.0).collect();
        assert_eq!(nonzero, vec![4]);

        let probe = &random_grids(&mut rng, 1, 3, 3, 4)[0];
        let s = score_grid(probe, &model).unwrap();
        for p in 0..9 {
            let expected = mahalanobis_diag(probe.patch(p), p, &model).unwrap() as f32;
            assert_eq!(s.values()[p], expected);
        }
    }

    #[test]
    fn score_grid_shape_mismatch() {
        let model = DiagGaussianGrid::from_parts(1, 2, 1, 0.01, vec![0.0; 2], vec![1.0; 2]).unwrap();
        let grid = FeatureGrid::new(2, 2, 1, vec![0.0; 4]).unwrap();
        assert!(matches!(score_grid(&grid, &model), Err(Error::ShapeMismatch { .. })));
    }
}
