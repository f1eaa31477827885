//! Ordered key-value reports, rendered as a tab-separated table or as
//! `key=value` lines.

use std::fmt::{self, Display};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    /// Header row `key\tvalue`, then one row per field.
    #[default]
    Tsv,
    /// One `key=value` line per field.
    Kv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "kv" => Ok(ReportFormat::Kv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Kv => "txt",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn extend(&mut self, other: Report) -> &mut Self {
        self.entries.extend(other.entries);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        match format {
            ReportFormat::Tsv => {
                out.push_str("key\tvalue\n");
                for (k, v) in &self.entries {
                    out.push_str(&format!("{k}\t{v}\n"));
                }
            }
            ReportFormat::Kv => {
                for (k, v) in &self.entries {
                    out.push_str(&format!("{k}={v}\n"));
                }
            }
        }
        out
    }

    /// Parses either rendering back into a report.
    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines().peekable();
        let tsv = lines.peek() == Some(&"key\tvalue");
        if tsv {
            lines.next();
        }
        let sep = if tsv { '\t' } else { '=' };
        let mut report = Report::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once(sep)?;
            report.push(k, v);
        }
        Some(report)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(ReportFormat::Tsv))
    }
}

/// Bytes as KB or MB with two decimals, 1024-based.
pub fn human_bytes(bytes: u64) -> String {
    let b = bytes as f64;
    if b >= 1024.0 * 1024.0 {
        format!("{:.2} MB", b / (1024.0 * 1024.0))
    } else {
        format!("{:.2} KB", b / 1024.0)
    }
}
