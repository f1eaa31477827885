//! Fitting and scoring for the four methods, over the on-disk artifacts.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use vadlite_core::bank::{collect_patches, coreset_select};
use vadlite_core::gaussian::{fit_diag, fit_full, score_grid};
use vadlite_core::pq::{codebooks_from_runs, encode_bank, train_subspace, validate_params};
use vadlite_core::search::{score_grid_exhaustive, score_grid_two_stage};
use vadlite_core::{
    CompressedBank, CoresetConfig, DiagGaussianGrid, FeatureGrid, FullGaussianGrid, MemoryBank,
    ScoreGrid, ScoreMap, SearchConfig,
};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::format::{
    read_bank, read_compressed, read_feature_header, read_gaussian_model, write_bank,
    write_compressed, write_diag_model, write_full_model, GaussianModelFile, BANK_MAGIC,
    COMPRESSED_MAGIC, GAUSSIAN_MAGIC,
};
use crate::manifest::{load_dataset, Dataset, Split};

/// A fitted model ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Full(FullGaussianGrid),
    Diag(DiagGaussianGrid),
    Bank(MemoryBank),
    Compressed(CompressedBank),
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::Full(_) => Method::PadimFull,
            Model::Diag(_) => Method::PadimLite,
            Model::Bank(_) => Method::PatchcoreExhaustive,
            Model::Compressed(_) => Method::PatchcoreLite,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Full(m) => m.shape().2,
            Model::Diag(m) => m.shape().2,
            Model::Bank(b) => b.dim(),
            Model::Compressed(b) => b.dim(),
        }
    }

    /// Candidate count actually used: `k` capped at the bank size.
    pub fn effective_k(&self, k: usize) -> usize {
        match self {
            Model::Compressed(b) => k.min(b.len()),
            _ => k,
        }
    }

    /// Per-patch anomaly scores for one feature grid.
    pub fn score(&self, grid: &FeatureGrid, search: &SearchConfig) -> Result<ScoreGrid> {
        Ok(match self {
            Model::Full(m) => score_grid(grid, m)?,
            Model::Diag(m) => score_grid(grid, m)?,
            Model::Bank(b) => score_grid_exhaustive(grid, b)?,
            Model::Compressed(b) => {
                let cfg = SearchConfig::new(self.effective_k(search.k), search.mode);
                score_grid_two_stage(grid, b, &cfg)?
            }
        })
    }

    /// Patch scores, image score and a pixel map of `size` smoothed with `sigma`.
    pub fn score_map(
        &self,
        grid: &FeatureGrid,
        search: &SearchConfig,
        size: (usize, usize),
        sigma: f64,
    ) -> Result<ScoreMap> {
        let patches = self.score(grid, search)?;
        Ok(ScoreMap::from_patches(patches).with_pixel_map(size.0, size.1, sigma)?)
    }
}

/// Files written by a fit, in write order, with their sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: Model,
    pub artifacts: Vec<(PathBuf, u64)>,
    /// Patches collected before coreset reduction (PatchCore methods).
    pub candidates: Option<usize>,
}

/// Path of the raw coreset bank written next to a compressed model.
pub fn companion_bank_path(model: &Path) -> PathBuf {
    model.with_extension("vadb")
}

/// Runs `f` on a pool capped at `threads` workers.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn load_grids(ds: &Dataset) -> Result<Vec<FeatureGrid>> {
    (0..ds.len()).into_par_iter().map(|i| ds.grid(i)).collect()
}

/// Fits the configured method on a train manifest and writes its artifacts.
///
/// Parameters are checked against the first feature file's header before any
/// grid is loaded.
pub fn fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let method = cfg.require_method()?;
    let model_path = cfg.require_model()?.to_path_buf();
    let ds = load_dataset(cfg.require_manifest()?)?;
    if ds.manifest.split != Split::Train {
        return Err(Error::Config(format!(
            "{}: fit needs a train manifest",
            ds.path().display()
        )));
    }
    if ds.len() < 2 && method.is_padim() {
        return Err(Error::Config("PaDiM needs at least two training images".into()));
    }
    if ds.is_empty() {
        return Err(Error::Config("train manifest lists no images".into()));
    }
    let (_, _, dim) = read_feature_header(&ds.feature_path(0))?;
    if method == Method::PatchcoreLite {
        validate_params(dim, cfg.subspaces, cfg.bits)?;
        if companion_bank_path(&model_path) == model_path {
            return Err(Error::Config("patchcore-lite model path must not end in .vadb".into()));
        }
    }

    info!("loading {} training grids", ds.len());
    let grids = load_grids(&ds)?;
    let mut artifacts = Vec::new();
    let mut candidates = None;
    let model = match method {
        Method::PadimLite => {
            let m = fit_diag(&grids, cfg.epsilon)?;
            artifacts.push((model_path.clone(), write_diag_model(&m, &model_path)?));
            Model::Diag(m)
        }
        Method::PadimFull => {
            let m = fit_full(&grids, cfg.epsilon)?;
            artifacts.push((model_path.clone(), write_full_model(&m, &model_path)?));
            Model::Full(m)
        }
        Method::PatchcoreExhaustive | Method::PatchcoreLite => {
            let all = collect_patches(&grids)?;
            drop(grids);
            candidates = Some(all.len());
            let size = cfg.coreset_size.min(all.len());
            info!("coreset: {size} of {} patches", all.len());
            let bank = coreset_select(&all, &CoresetConfig::with_size(size, cfg.seed))?;
            drop(all);
            if method == Method::PatchcoreExhaustive {
                artifacts.push((model_path.clone(), write_bank(&bank, &model_path)?));
                Model::Bank(bank)
            } else {
                let compressed = compress_parallel(&bank, cfg)?;
                artifacts.push((model_path.clone(), write_compressed(&compressed, &model_path)?));
                let companion = companion_bank_path(&model_path);
                artifacts.push((companion.clone(), write_bank(&bank, &companion)?));
                Model::Compressed(compressed)
            }
        }
    };
    Ok(FitOutcome {
        model,
        artifacts,
        candidates,
    })
}

/// Trains the `m` subspace quantizers concurrently; results match the
/// sequential trainer because each subspace owns its random stream.
fn compress_parallel(bank: &MemoryBank, cfg: &RunConfig) -> Result<CompressedBank> {
    info!(
        "training {} codebooks of {} centroids",
        cfg.subspaces,
        1usize << cfg.bits
    );
    let runs = (0..cfg.subspaces)
        .into_par_iter()
        .map(|j| train_subspace(bank, cfg.subspaces, cfg.bits, j, cfg.seed, cfg.max_iters))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let trained = codebooks_from_runs(runs, cfg.bits)?;
    Ok(encode_bank(bank, trained.codebooks)?)
}

fn sniff_magic(path: &Path) -> Result<[u8; 4]> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    Ok(magic)
}

/// Loads a model file, detecting its kind from the magic bytes.
///
/// With `patchcore-exhaustive`, a compressed bank is decoded and searched
/// exhaustively. Any other disagreement between `method` and the file is an
/// error.
pub fn load_model(path: &Path, method: Option<Method>) -> Result<Model> {
    let magic = sniff_magic(path)?;
    let model = if magic == GAUSSIAN_MAGIC {
        match read_gaussian_model(path)? {
            GaussianModelFile::Full(m) => Model::Full(m),
            GaussianModelFile::Diag(m) => Model::Diag(m),
        }
    } else if magic == BANK_MAGIC {
        Model::Bank(read_bank(path)?)
    } else if magic == COMPRESSED_MAGIC {
        let bank = read_compressed(path)?;
        if method == Some(Method::PatchcoreExhaustive) {
            Model::Bank(bank.decode_all())
        } else {
            Model::Compressed(bank)
        }
    } else {
        return Err(Error::format(path, format!("unrecognized model magic {magic:?}")));
    };
    if let Some(m) = method {
        if m != model.method() {
            return Err(Error::Config(format!(
                "{} holds a {} model, not {m}",
                path.display(),
                model.method()
            )));
        }
    }
    Ok(model)
}

/// Scores every record of a dataset in parallel, in record order.
pub fn score_dataset(model: &Model, ds: &Dataset, cfg: &RunConfig) -> Result<Vec<ScoreMap>> {
    let search = SearchConfig::new(cfg.k, cfg.mode);
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let r = &ds.records()[i];
            model.score_map(&ds.grid(i)?, &search, (r.height, r.width), cfg.sigma)
        })
        .collect()
}
