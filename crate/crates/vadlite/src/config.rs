//! Run configuration, merged from command-line flags and an optional
//! `key=value` file. Flags win over file entries; defaults fill the rest.
//!
//! ```text
//! # fit.conf
//! method = patchcore-lite
//! manifest = data/train.txt
//! coreset-size = 5000
//! ```
//!
//! Keys are the long flag names without the leading dashes. Relative paths in
//! a file resolve against the file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vadlite_core::anomaly_map::DEFAULT_SIGMA;
use vadlite_core::bank::DEFAULT_CORESET_SIZE;
use vadlite_core::gaussian::DEFAULT_EPSILON;
use vadlite_core::pq::{DEFAULT_BITS, DEFAULT_MAX_ITERS, DEFAULT_SUBSPACES, MAX_BITS};
use vadlite_core::search::DEFAULT_CANDIDATES;
use vadlite_core::SearchMode;

use crate::error::{Error, Result};
use crate::report::ReportFormat;

pub const DEFAULT_REPETITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Full-covariance Gaussian per position.
    PadimFull,
    /// Diagonal Gaussian per position.
    PadimLite,
    /// Raw coreset bank, exhaustive nearest neighbour.
    PatchcoreExhaustive,
    /// Product-quantized bank, two-stage search.
    PatchcoreLite,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::PadimFull,
        Method::PadimLite,
        Method::PatchcoreExhaustive,
        Method::PatchcoreLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PadimFull => "padim-full",
            Method::PadimLite => "padim-lite",
            Method::PatchcoreExhaustive => "patchcore-exhaustive",
            Method::PatchcoreLite => "patchcore-lite",
        }
    }

    pub fn is_padim(self) -> bool {
        matches!(self, Method::PadimFull | Method::PadimLite)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

fn parse_mode(s: &str) -> std::result::Result<SearchMode, String> {
    match s {
        "adc" => Ok(SearchMode::Adc),
        "sdc" => Ok(SearchMode::Sdc),
        other => Err(format!("unknown search mode {other:?}")),
    }
}

pub fn mode_name(mode: SearchMode) -> &'static str {
    match mode {
        SearchMode::Adc => "adc",
        SearchMode::Sdc => "sdc",
    }
}

/// `HxW`, e.g. `224x224`.
fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    match (h.parse::<usize>(), w.parse::<usize>()) {
        (Ok(h), Ok(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(format!("expected positive HxW, got {s:?}")),
    }
}

/// Every key accepted in a config file or as a flag.
pub const KEYS: &[&str] = &[
    "method",
    "manifest",
    "model",
    "out",
    "seed",
    "threads",
    "epsilon",
    "coreset-size",
    "m",
    "b",
    "k",
    "mode",
    "sigma",
    "max-iters",
    "repetitions",
    "features",
    "image-size",
    "format",
];

const PATH_KEYS: &[&str] = &["manifest", "model", "out", "features"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Option<Method>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: Option<PathBuf>,
    /// Pixel-map size for a single `--features` input.
    pub image_size: Option<(usize, usize)>,
    pub seed: u64,
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
    pub epsilon: f64,
    pub coreset_size: usize,
    pub subspaces: usize,
    pub bits: u32,
    pub k: usize,
    pub mode: SearchMode,
    pub sigma: f64,
    pub max_iters: usize,
    pub repetitions: usize,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: None,
            manifest: None,
            model: None,
            out: None,
            features: None,
            image_size: None,
            seed: 0,
            threads: None,
            epsilon: DEFAULT_EPSILON,
            coreset_size: DEFAULT_CORESET_SIZE,
            subspaces: DEFAULT_SUBSPACES,
            bits: DEFAULT_BITS,
            k: DEFAULT_CANDIDATES,
            mode: SearchMode::Adc,
            sigma: DEFAULT_SIGMA,
            max_iters: DEFAULT_MAX_ITERS,
            repetitions: DEFAULT_REPETITIONS,
            format: ReportFormat::Tsv,
        }
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(path, &text)
}

pub fn parse_config_text(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key {key:?}")));
        }
        let value = if PATH_KEYS.contains(&key) {
            base.join(value).display().to_string()
        } else {
            value.to_string()
        };
        if out.insert(key.to_string(), value).is_some() {
            return Err(err(format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}

fn value<T>(key: &str, raw: &str, parse: impl FnOnce(&str) -> std::result::Result<T, String>) -> Result<T> {
    parse(raw).map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn number<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

impl RunConfig {
    /// Builds a configuration from `key → value` entries; keys are those in [`KEYS`].
    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, raw) in entries {
            let k = key.as_str();
            match k {
                "method" => cfg.method = Some(value(k, raw, str::parse)?),
                "manifest" => cfg.manifest = Some(PathBuf::from(raw)),
                "model" => cfg.model = Some(PathBuf::from(raw)),
                "out" => cfg.out = Some(PathBuf::from(raw)),
                "features" => cfg.features = Some(PathBuf::from(raw)),
                "image-size" => cfg.image_size = Some(value(k, raw, parse_size)?),
                "seed" => cfg.seed = value(k, raw, number)?,
                "threads" => cfg.threads = Some(value(k, raw, number)?),
                "epsilon" => cfg.epsilon = value(k, raw, number)?,
                "coreset-size" => cfg.coreset_size = value(k, raw, number)?,
                "m" => cfg.subspaces = value(k, raw, number)?,
                "b" => cfg.bits = value(k, raw, number)?,
                "k" => cfg.k = value(k, raw, number)?,
                "mode" => cfg.mode = value(k, raw, parse_mode)?,
                "sigma" => cfg.sigma = value(k, raw, number)?,
                "max-iters" => cfg.max_iters = value(k, raw, number)?,
                "repetitions" => cfg.repetitions = value(k, raw, number)?,
                "format" => cfg.format = value(k, raw, str::parse)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Merges file entries under flag entries, then parses.
    pub fn resolve(flags: BTreeMap<String, String>, file: Option<&Path>) -> Result<Self> {
        let mut entries = match file {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        entries.extend(flags);
        Self::from_entries(&entries)
    }

    /// Checks the numeric parameters shared by every command.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be positive and finite");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad("sigma must be non-negative and finite");
        }
        if self.coreset_size == 0 {
            return bad("coreset-size must be at least 1");
        }
        if self.subspaces == 0 {
            return bad("m must be at least 1");
        }
        if self.bits == 0 || self.bits > MAX_BITS {
            return bad("b must be between 1 and 16");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_iters == 0 {
            return bad("max-iters must be at least 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    pub fn require_method(&self) -> Result<Method> {
        self.method
            .ok_or_else(|| Error::Config("--method is required".into()))
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::Config("--manifest is required".into()))
    }

    pub fn require_model(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::Config("--model is required".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }
}
