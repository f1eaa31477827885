//! Lloyd's k-means with k-means++ seeding, used to learn one PQ codebook.
//!
//! Runs in `f64` on points given as `f32`. Empty clusters are re-seeded at the
//! point farthest from its assigned centroid; if every point already sits on
//! a centroid the empty one is left in place, which yields collapsed
//! duplicates when there are fewer distinct points than clusters.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

/// Outcome of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k × dim`
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss: Vec<f64>,
    /// Number of centroid updates performed.
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding; falls back to the lowest unpicked index once all mass is covered.
fn init_plus_plus<R: Rng>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(point(rng.gen_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centroids[..dim])).collect();
    while centroids.len() < k * dim {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            // rounding can run past the end; the last positive-mass point wins
            chosen.unwrap_or(0)
        } else {
            0
        };
        let start = centroids.len();
        centroids.extend_from_slice(point(pick));
        let added = &centroids[start..start + dim];
        for (i, slot) in dist.iter_mut().enumerate() {
            let d = sq_dist(point(i), added);
            if d < *slot {
                *slot = d;
            }
        }
    }
    centroids
}

/// Clusters `points` (`n × dim`, row-major) into `k` groups.
///
/// Stops after `max_iters` centroid updates or when an assignment pass
/// changes nothing. Callers guarantee `n ≥ 1`, `k ≥ 1`, `dim ≥ 1`.
pub fn kmeans<R: Rng>(points: &[f32], dim: usize, k: usize, max_iters: usize, rng: &mut R) -> KMeans {
    let points: Vec<f64> = points.iter().map(|&v| v as f64).collect();
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = init_plus_plus(&points, dim, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut residual = vec![0.0f64; n];
    let mut wcss = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..n {
            let (c, d) = nearest(point(i), &centroids, dim);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
            residual[i] = d;
            total += d;
        }
        wcss.push(total);
        if !changed {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            let centroid = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (dst, &s) in centroid.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s / inv;
                }
                continue;
            }
            let mut far = (f64::NEG_INFINITY, usize::MAX);
            for (i, &r) in residual.iter().enumerate() {
                if r > far.0 {
                    far = (r, i);
                }
            }
            if far.0 > 0.0 {
                centroid.copy_from_slice(point(far.1));
                residual[far.1] = 0.0;
            }
        }
        iterations += 1;
    }

    KMeans {
        dim,
        centroids,
        wcss,
        iterations,
        converged,
    }
}
