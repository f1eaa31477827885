//! The `vadlite` command line: `fit`, `score`, `eval`, `bench` and `footprint`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use vadlite_core::anomaly_map::minmax_normalize;
use vadlite_core::eval::{auroc, pixel_auroc};
use vadlite_core::{ScoreMap, SearchConfig};

use crate::bench::{analytic_footprint, bench, footprint};
use crate::config::{mode_name, RunConfig};
use crate::error::{Error, Result};
use crate::format::{read_feature_file, write_pgm16, write_score_grid};
use crate::manifest::{load_dataset, Split};
use crate::pipeline::{fit, load_model, score_dataset, with_pool, Model};
use crate::report::{human_bytes, Report};

#[derive(Debug, Parser)]
#[command(name = "vadlite", version, about = "Visual anomaly detection on pre-extracted patch features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a train manifest.
    Fit(RunArgs),
    /// Write patch scores, pixel maps and image scores.
    Score(RunArgs),
    /// Image- and pixel-level AUROC on a test manifest.
    Eval(RunArgs),
    /// Per-image timing, operation counts and footprint.
    Bench(RunArgs),
    /// Artifact sizes against the analytic formulas.
    Footprint(FootprintArgs),
}

/// Flags shared by every subcommand. Values also come from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// padim-full | padim-lite | patchcore-exhaustive | patchcore-lite
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker cap [default: all cores]
    #[arg(long)]
    pub threads: Option<String>,
    /// Variance floor, and covariance regularizer for padim-full [default: 0.01]
    #[arg(long)]
    pub epsilon: Option<String>,
    /// [default: 10000]
    #[arg(long = "coreset-size")]
    pub coreset_size: Option<String>,
    /// Subspaces [default: 8]
    #[arg(long)]
    pub m: Option<String>,
    /// Bits per subspace code [default: 8]
    #[arg(long)]
    pub b: Option<String>,
    /// Stage-one candidates [default: 1000]
    #[arg(long)]
    pub k: Option<String>,
    /// adc | sdc [default: adc]
    #[arg(long)]
    pub mode: Option<String>,
    /// Pixel-map blur in pixels [default: 4.0]
    #[arg(long)]
    pub sigma: Option<String>,
    /// k-means iteration cap [default: 100]
    #[arg(long = "max-iters")]
    pub max_iters: Option<String>,
    /// Bench passes over the test set [default: 3]
    #[arg(long)]
    pub repetitions: Option<String>,
    /// Single feature file to score instead of a manifest
    #[arg(long)]
    pub features: Option<String>,
    /// Pixel-map size HxW for --features [default: the grid size]
    #[arg(long = "image-size")]
    pub image_size: Option<String>,
    /// tsv | kv [default: tsv]
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FootprintArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Bank vectors K, for analytic figures without a model file
    #[arg(long)]
    pub vectors: Option<usize>,
    /// Descriptor dimension d, for analytic figures
    #[arg(long)]
    pub dim: Option<usize>,
    /// Patch positions H*·W*, for analytic PaDiM figures
    #[arg(long, default_value_t = 1)]
    pub positions: usize,
}

impl RunArgs {
    fn entries(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("method", &self.method),
            ("manifest", &self.manifest),
            ("model", &self.model),
            ("out", &self.out),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("epsilon", &self.epsilon),
            ("coreset-size", &self.coreset_size),
            ("m", &self.m),
            ("b", &self.b),
            ("k", &self.k),
            ("mode", &self.mode),
            ("sigma", &self.sigma),
            ("max-iters", &self.max_iters),
            ("repetitions", &self.repetitions),
            ("features", &self.features),
            ("image-size", &self.image_size),
            ("format", &self.format),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
            .collect()
    }

    /// Flags over config file over defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.entries(), self.config.as_deref())
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fits and returns the printed summary.
pub fn cmd_fit(cfg: &RunConfig) -> Result<String> {
    let outcome = fit(cfg)?;
    let mut out = format!("method: {}\n", outcome.model.method());
    for (path, bytes) in &outcome.artifacts {
        out.push_str(&format!("wrote {} ({bytes} bytes)\n", path.display()));
    }
    match &outcome.model {
        Model::Diag(m) => {
            let (h, w, d) = m.shape();
            out.push_str(&format!("positions: {}, dim: {d}\n", h * w));
        }
        Model::Full(m) => {
            let (h, w, d) = m.shape();
            out.push_str(&format!("positions: {}, dim: {d}\n", h * w));
        }
        Model::Bank(b) => {
            out.push_str(&format!(
                "bank: {} of {} patches, dim {}\n",
                b.len(),
                outcome.candidates.unwrap_or(b.len()),
                b.dim()
            ));
            let raw = 4 * (b.len() * b.dim()) as u64;
            out.push_str(&format!("raw bank: {raw} bytes ({})\n", human_bytes(raw)));
        }
        Model::Compressed(b) => {
            let s = b.storage_report();
            out.push_str(&format!(
                "bank: {} of {} patches, dim {}, m {}, b {}\n",
                s.vectors,
                outcome.candidates.unwrap_or(s.vectors),
                s.dim,
                s.subspaces,
                s.bits
            ));
            let line = |label: &str, bytes: usize| {
                format!("{label}: {bytes} bytes ({})\n", human_bytes(bytes as u64))
            };
            out.push_str(&line("codes", s.index_bytes));
            out.push_str(&line("codes, byte-aligned rows", s.packed_index_bytes));
            out.push_str(&line("codebooks", s.codebook_bytes));
            out.push_str(&line("compressed total", s.total_bytes));
            out.push_str(&line("raw bank", s.raw_bytes));
            out.push_str(&format!("compression ratio: {:.2}\n", s.ratio));
        }
    }
    Ok(out)
}

/// Files written for one scored image, in `dir`, named after `id`.
fn write_score_artifacts(dir: &Path, id: &str, map: &ScoreMap) -> Result<()> {
    write_score_grid(&map.patch_scores, &dir.join(format!("{id}.patches.vadf")))?;
    let pixels = map.pixel_map.as_ref().expect("pixel map requested");
    write_score_grid(pixels, &dir.join(format!("{id}.pixels.vadf")))?;
    let norm = minmax_normalize(pixels.values())?;
    if norm.degenerate {
        warn!("{id}: constant pixel map, PGM written as zeros");
    }
    write_pgm16(pixels.height(), pixels.width(), &norm.values, &dir.join(format!("{id}.pgm")))?;
    Ok(())
}

/// Scores `--features` or every record of `--manifest` and writes, per image,
/// `<id>.patches.vadf`, `<id>.pixels.vadf` and `<id>.pgm`, plus
/// `image_scores.tsv`.
pub fn cmd_score(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let out = cfg.require_out()?;
    let model = load_model(cfg.require_model()?, cfg.method)?;
    create_dir(out)?;
    let mut scores: Vec<(String, ScoreMap)> = Vec::new();
    match (&cfg.features, &cfg.manifest) {
        (Some(path), None) => {
            let grid = read_feature_file(path)?;
            let size = cfg.image_size.unwrap_or((grid.height(), grid.width()));
            let map = model.score_map(&grid, &SearchConfig::new(cfg.k, cfg.mode), size, cfg.sigma)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            scores.push((id, map));
        }
        (None, Some(manifest)) => {
            let ds = load_dataset(manifest)?;
            let maps = score_dataset(&model, &ds, cfg)?;
            scores.extend(ds.records().iter().map(|r| r.image_id.clone()).zip(maps));
        }
        _ => {
            return Err(Error::Config(
                "score needs exactly one of --features or --manifest".into(),
            ))
        }
    }
    let mut table = String::from("image_id\tscore\n");
    for (id, map) in &scores {
        write_score_artifacts(out, id, map)?;
        table.push_str(&format!("{id}\t{}\n", map.image_score));
    }
    write_text(&out.join("image_scores.tsv"), &table)?;
    info!("scored {} images into {}", scores.len(), out.display());
    Ok(table)
}

/// I-ROC over image scores and P-ROC over pooled pixels of a test manifest.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let model = load_model(cfg.require_model()?, cfg.method)?;
    let ds = load_dataset(cfg.require_manifest()?)?;
    if ds.manifest.split != Split::Test {
        return Err(Error::Config(format!("{}: eval needs a test manifest", ds.path().display())));
    }
    let labels = ds.labels();
    let anomalous = labels.iter().filter(|l| l.is_anomalous()).count();
    if anomalous == 0 || anomalous == labels.len() {
        return Err(Error::Config("eval needs both normal and anomalous images".into()));
    }
    let masks = (0..ds.len()).map(|i| ds.mask(i)).collect::<Result<Vec<_>>>()?;
    let maps = score_dataset(&model, &ds, cfg)?;
    let image_scores: Vec<f32> = maps.iter().map(|m| m.image_score).collect();
    let i_roc = auroc(&image_scores, &labels)?;
    let pixel_maps: Vec<_> = maps.into_iter().filter_map(|m| m.pixel_map).collect();
    let p_roc = pixel_auroc(&pixel_maps, &masks)?;

    let mut r = Report::new();
    r.push("method", model.method());
    r.push("images", labels.len());
    r.push("anomalous", anomalous);
    r.push("normal", labels.len() - anomalous);
    if let Model::Compressed(_) = model {
        r.push("k", model.effective_k(cfg.k));
        r.push("mode", mode_name(cfg.mode));
    }
    r.push("sigma", cfg.sigma);
    r.push("i_roc", i_roc);
    r.push("p_roc", p_roc);
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join(format!("eval.{}", cfg.format.extension())), &r.render(cfg.format))?;
    }
    Ok(r)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<Report> {
    let r = bench(cfg)?;
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join(format!("bench.{}", cfg.format.extension())), &r.render(cfg.format))?;
    }
    Ok(r)
}

/// With `--model`, compares file sizes against the formulas. Without, prints
/// the formulas for `--vectors`/`--dim`/`--positions` and the method flags.
pub fn cmd_footprint(cfg: &RunConfig, args: &FootprintArgs) -> Result<Report> {
    cfg.validate()?;
    let r = match &cfg.model {
        Some(path) => footprint(path, &load_model(path, cfg.method)?)?,
        None => {
            let method = cfg.require_method()?;
            let dim = args
                .dim
                .ok_or_else(|| Error::Config("analytic footprint needs --dim".into()))?;
            let vectors = match (method.is_padim(), args.vectors) {
                (true, v) => v.unwrap_or(0),
                (false, Some(v)) if v > 0 => v,
                _ => return Err(Error::Config("analytic footprint needs --vectors".into())),
            };
            if dim == 0 || args.positions == 0 {
                return Err(Error::Config("--dim and --positions must be positive".into()));
            }
            if method == crate::Method::PatchcoreLite {
                vadlite_core::pq::validate_params(dim, cfg.subspaces, cfg.bits)?;
            }
            analytic_footprint(method, cfg, vectors, dim, args.positions)
        }
    };
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join(format!("footprint.{}", cfg.format.extension())), &r.render(cfg.format))?;
    }
    Ok(r)
}

/// Runs one parsed command line and returns what it prints.
pub fn run(cli: &Cli) -> Result<String> {
    let run_args = match &cli.command {
        Command::Fit(a) | Command::Score(a) | Command::Eval(a) | Command::Bench(a) => a,
        Command::Footprint(f) => &f.run,
    };
    let cfg = run_args.resolve()?;
    cfg.validate()?;
    with_pool(cfg.threads, || match &cli.command {
        Command::Fit(_) => cmd_fit(&cfg),
        Command::Score(_) => cmd_score(&cfg),
        Command::Eval(_) => cmd_eval(&cfg).map(|r| r.render(cfg.format)),
        Command::Bench(_) => cmd_bench(&cfg).map(|r| r.render(cfg.format)),
        Command::Footprint(f) => cmd_footprint(&cfg, f).map(|r| r.render(cfg.format)),
    })?
}

