//! Dataset manifests: a header line followed by one record per image, fields
//! separated by single tabs (shown here as spaces).
//!
//! ```text
//! VADM-MANIFEST 1 test
//! 000  features/000.vadf  anomalous  masks/000.pgm  224  224
//! 001  features/001.vadf  normal     -              224  224
//! ```
//!
//! Fields: image id, feature file, label, mask (`-` for none), original
//! height, original width.
//!
//! Paths are relative to the manifest's directory. Masks are binary PGM
//! files; any non-zero pixel marks a defect.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vadlite_core::{FeatureGrid, Label, Mask};

use crate::error::{Error, Result};
use crate::format::{read_feature_file, read_pgm, read_pgm_dims};

pub const MANIFEST_MAGIC: &str = "VADM-MANIFEST";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

fn parse_label(s: &str) -> std::result::Result<Label, String> {
    match s {
        "normal" => Ok(Label::Normal),
        "anomalous" => Ok(Label::Anomalous),
        other => Err(format!("unknown label {other:?}")),
    }
}

fn label_str(label: Label) -> &'static str {
    match label {
        Label::Normal => "normal",
        Label::Anomalous => "anomalous",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub feature_path: PathBuf,
    pub label: Label,
    pub mask_path: Option<PathBuf>,
    /// Original image size, the resolution of pixel maps and masks.
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: Split,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC} {MANIFEST_VERSION} {}\n", self.split);
        for r in &self.records {
            let mask = r
                .mask_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.image_id,
                r.feature_path.display(),
                label_str(r.label),
                mask,
                r.height,
                r.width
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != MANIFEST_MAGIC {
            return Err(err(1, format!("expected \"{MANIFEST_MAGIC} 1 <split>\", got {head:?}")));
        }
        if fields[1] != MANIFEST_VERSION.to_string() {
            return Err(err(1, format!("unsupported manifest version {}", fields[1])));
        }
        let split: Split = fields[2].parse().map_err(|e| err(1, e))?;

        let mut records = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(err(line_no, format!("expected 6 tab-separated fields, found {}", cols.len())));
            }
            let dim = |s: &str, what: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v > 0 => Ok(v),
                    _ => Err(err(line_no, format!("invalid {what} {s:?}"))),
                }
            };
            records.push(ImageRecord {
                image_id: cols[0].to_string(),
                feature_path: PathBuf::from(cols[1]),
                label: parse_label(cols[2]).map_err(|e| err(line_no, e))?,
                mask_path: (cols[3] != "-").then(|| PathBuf::from(cols[3])),
                height: dim(cols[4], "height")?,
                width: dim(cols[5], "width")?,
            });
        }
        Ok(Self { split, records })
    }
}

/// A validated manifest whose feature grids are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    root: PathBuf,
    path: PathBuf,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.manifest.records
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    pub fn feature_path(&self, i: usize) -> PathBuf {
        self.resolve(&self.manifest.records[i].feature_path)
    }

    /// Reads record `i`'s feature grid.
    pub fn grid(&self, i: usize) -> Result<FeatureGrid> {
        read_feature_file(&self.feature_path(i))
    }

    pub fn grids(&self) -> Result<Vec<FeatureGrid>> {
        (0..self.len()).map(|i| self.grid(i)).collect()
    }

    /// Record `i`'s mask, all-normal when the record has none.
    pub fn mask(&self, i: usize) -> Result<Mask> {
        let r = &self.manifest.records[i];
        match &r.mask_path {
            None => Ok(Mask::empty(r.height, r.width)),
            Some(rel) => {
                let (h, w, px) = read_pgm(&self.resolve(rel))?;
                Ok(Mask::new(h, w, px.into_iter().map(|v| v > 0).collect())?)
            }
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.manifest.records.iter().map(|r| r.label).collect()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Parses and validates a manifest. Mask headers are checked eagerly; feature
/// files are only touched by [`Dataset::grid`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = DatasetManifest::parse(path, &text)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let invalid = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (n, r) in manifest.records.iter().enumerate() {
        let line = n + 2;
        match (manifest.split, r.label, &r.mask_path) {
            (Split::Train, Label::Anomalous, _) => {
                return Err(invalid(line, format!("train record {} is labeled anomalous", r.image_id)));
            }
            (Split::Test, Label::Anomalous, None) => {
                return Err(invalid(line, format!("anomalous record {} has no mask", r.image_id)));
            }
            _ => {}
        }
        if let Some(mask) = &r.mask_path {
            let (h, w) = read_pgm_dims(&root.join(mask))?;
            if (h, w) != (r.height, r.width) {
                return Err(invalid(
                    line,
                    format!(
                        "mask of {} is {h}x{w}, image is {}x{}",
                        r.image_id, r.height, r.width
                    ),
                ));
            }
        }
    }
    Ok(Dataset {
        manifest,
        root,
        path: path.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{write_feature_file, write_pgm16};

    fn record(id: &str, label: Label, mask: Option<&str>) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            feature_path: PathBuf::from(format!("{id}.vadf")),
            label,
            mask_path: mask.map(PathBuf::from),
            height: 4,
            width: 4,
        }
    }

    #[test]
    fn three_train_records() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            split: Split::Train,
            records: (0..3).map(|i| record(&format!("{i}"), Label::Normal, None)).collect(),
        };
        let path = dir.path().join("train.txt");
        m.write(&path).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.manifest, m);
    }

    #[test]
    fn anomalous_train_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            split: Split::Train,
            records: vec![record("a", Label::Normal, None), record("b", Label::Anomalous, None)],
        };
        let path = dir.path().join("train.txt");
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 3, .. }), "{err}");
    }

    #[test]
    fn anomalous_without_mask_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            split: Split::Test,
            records: vec![record("b", Label::Anomalous, None)],
        };
        let path = dir.path().join("test.txt");
        m.write(&path).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Manifest { .. })));
    }

    #[test]
    fn mask_dimension_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm16(3, 4, &[0.0; 12], &dir.path().join("m.pgm")).unwrap();
        let m = DatasetManifest {
            split: Split::Test,
            records: vec![record("b", Label::Anomalous, Some("m.pgm"))],
        };
        let path = dir.path().join("test.txt");
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("mask of b is 3x4"), "{err}");
    }

    #[test]
    fn missing_feature_reported_lazily_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            split: Split::Train,
            records: vec![record("present", Label::Normal, None), record("gone", Label::Normal, None)],
        };
        let path = dir.path().join("train.txt");
        m.write(&path).unwrap();
        let g = FeatureGrid::new(1, 1, 1, vec![0.0]).unwrap();
        write_feature_file(&g, &dir.path().join("present.vadf")).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.grid(0).unwrap(), g);
        let err = ds.grid(1).unwrap_err().to_string();
        assert!(err.contains("gone.vadf"), "{err}");
    }

    #[test]
    fn malformed_lines() {
        let p = Path::new("x.txt");
        assert!(DatasetManifest::parse(p, "").is_err());
        assert!(DatasetManifest::parse(p, "VADM-MANIFEST 2 train\n").is_err());
        assert!(DatasetManifest::parse(p, "VADM-MANIFEST 1 val\n").is_err());
        let bad = "VADM-MANIFEST 1 test\na\tb\tnormal\t-\t0\t4\n";
        assert!(matches!(DatasetManifest::parse(p, bad), Err(Error::Manifest { line: 2, .. })));
    }
}
