//! Synthetic feature datasets written in the on-disk formats.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vadlite::format::{write_feature_file, write_pgm16};
use vadlite::manifest::{DatasetManifest, ImageRecord, Split};
use vadlite_core::{FeatureGrid, Label};

/// Independent Gaussian per position and channel, drawn once from a seed.
pub struct Generator {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(height: usize, width: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = height * width * dim;
        let mean = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let std = (0..n).map(|_| rng.gen_range(0.5f32..1.5)).collect();
        Self {
            height,
            width,
            dim,
            mean,
            std,
            rng,
        }
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn normal(&mut self) -> FeatureGrid {
        let values = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| m + s * self.rng.sample::<f32, _>(StandardNormal))
            .collect();
        FeatureGrid::new(self.height, self.width, self.dim, values).unwrap()
    }

    /// A normal grid with `fraction` of its positions shifted by `shift` standard
    /// deviations in every channel, random sign per channel. Returns the shifted positions.
    pub fn anomalous(&mut self, fraction: f64, shift: f32) -> (FeatureGrid, Vec<usize>) {
        let mut grid = self.normal();
        let count = ((self.positions() as f64 * fraction).round() as usize).max(1);
        let mut order: Vec<usize> = (0..self.positions()).collect();
        order.shuffle(&mut self.rng);
        let mut shifted = order[..count].to_vec();
        shifted.sort_unstable();
        let d = self.dim;
        for &p in &shifted {
            let patch = grid.patch_mut(p);
            for (c, v) in patch.iter_mut().enumerate() {
                let sign = if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
                *v += sign * shift * self.std[p * d + c];
            }
        }
        (grid, shifted)
    }
}

/// One image to write: its grid, label and defective patch positions.
pub struct Sample {
    pub grid: FeatureGrid,
    pub label: Label,
    pub defects: Vec<usize>,
}

/// Pixel mask with every pixel of a defective patch set; `scale` pixels per patch side.
pub fn patch_mask(h: usize, w: usize, scale: usize, defects: &[usize]) -> Vec<f32> {
    let (ph, pw) = (h * scale, w * scale);
    let mut px = vec![0.0f32; ph * pw];
    for &p in defects {
        let (i, j) = (p / w, p % w);
        for y in i * scale..(i + 1) * scale {
            for x in j * scale..(j + 1) * scale {
                px[y * pw + x] = 1.0;
            }
        }
    }
    px
}

/// Writes `samples` under `dir/<name>/` with a manifest at `dir/<name>.txt`.
/// Anomalous samples get a PGM mask; image size is the grid size times `scale`.
pub fn write_dataset(dir: &Path, name: &str, split: Split, samples: &[Sample], scale: usize) -> PathBuf {
    let sub = dir.join(name);
    std::fs::create_dir_all(&sub).unwrap();
    let mut records = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{name}_{i:04}");
        let feature = PathBuf::from(name).join(format!("{id}.vadf"));
        write_feature_file(&s.grid, &dir.join(&feature)).unwrap();
        let (h, w) = (s.grid.height(), s.grid.width());
        let mask_path = if s.label.is_anomalous() {
            let mask = PathBuf::from(name).join(format!("{id}.pgm"));
            let px = patch_mask(h, w, scale, &s.defects);
            write_pgm16(h * scale, w * scale, &px, &dir.join(&mask)).unwrap();
            Some(mask)
        } else {
            None
        };
        records.push(ImageRecord {
            image_id: id,
            feature_path: feature,
            label: s.label,
            mask_path,
            height: h * scale,
            width: w * scale,
        });
    }
    let manifest = dir.join(format!("{name}.txt"));
    DatasetManifest { split, records }.write(&manifest).unwrap();
    manifest
}

pub fn normal_samples(gen: &mut Generator, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            grid: gen.normal(),
            label: Label::Normal,
            defects: Vec::new(),
        })
        .collect()
}

pub fn anomalous_samples(gen: &mut Generator, n: usize, fraction: f64, shift: f32) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let (grid, defects) = gen.anomalous(fraction, shift);
            Sample {
                grid,
                label: Label::Anomalous,
                defects,
            }
        })
        .collect()
}

/// Train split of `n_train` normals and a test split of normals then anomalies.
pub fn train_test(
    dir: &Path,
    gen: &mut Generator,
    n_train: usize,
    n_normal: usize,
    n_anomalous: usize,
    scale: usize,
) -> (PathBuf, PathBuf) {
    let train = normal_samples(gen, n_train);
    let mut test = normal_samples(gen, n_normal);
    test.extend(anomalous_samples(gen, n_anomalous, 0.1, 4.0));
    (
        write_dataset(dir, "train", Split::Train, &train, scale),
        write_dataset(dir, "test", Split::Test, &test, scale),
    )
}
