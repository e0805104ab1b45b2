use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::estimator::HalfWidths;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (csv, json, markdown)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "markdown",
        })
    }
}

/// Where the coverage study takes its half-widths from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HalfWidthSource {
    /// ε from the precision study at the same sample size.
    #[default]
    Precision,
    /// The half-widths file.
    Given,
}

impl FromStr for HalfWidthSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "precision" => Ok(HalfWidthSource::Precision),
            "given" => Ok(HalfWidthSource::Given),
            other => Err(format!("unknown half-width source `{other}` (precision, given)")),
        }
    }
}

/// Every setting, all optional. Used both for command-line flags and for
/// the config file; the file wins where both are set.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub census: Option<PathBuf>,
    pub received: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub half_widths: Option<PathBuf>,
    pub target_margin: Option<f64>,
    pub confidence: Option<f64>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub sample_sizes: Option<Vec<usize>>,
    pub quantile: Option<f64>,
    pub leader: Option<String>,
    pub runner_up: Option<String>,
    pub format: Option<Format>,
    pub out_dir: Option<PathBuf>,
    pub exhaustive: Option<bool>,
    pub workers: Option<usize>,
    pub include_participation: Option<bool>,
    pub histogram_bins: Option<usize>,
    pub coverage_half_widths: Option<HalfWidthSource>,
    pub rejection_level: Option<f64>,
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self, AuditError> {
        toml::from_str(text).map_err(|e| AuditError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, AuditError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut o = Self::from_toml(&text)?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut o.census, &mut o.received, &mut o.schema, &mut o.half_widths, &mut o.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(o)
    }

    /// `other` wins wherever it sets a value.
    pub fn overlay(self, other: Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            census, received, schema, half_widths, target_margin, confidence, replicates, seed, sample_sizes,
            quantile, leader, runner_up, format, out_dir, exhaustive, workers, include_participation,
            histogram_bins, coverage_half_widths, rejection_level
        )
    }
}

pub const DEFAULT_SEED: u64 = 20_170_604;
pub const DEFAULT_SAMPLE_SIZES: [usize; 2] = [1200, 1347];
pub const MIN_REPLICATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub census: Option<PathBuf>,
    pub received: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub half_widths: Option<PathBuf>,
    pub target_margin: f64,
    pub confidence: f64,
    pub replicates: usize,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub quantile: f64,
    pub leader: Option<String>,
    pub runner_up: Option<String>,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub exhaustive: bool,
    #[serde(skip)]
    pub workers: Option<usize>,
    pub include_participation: bool,
    pub histogram_bins: usize,
    pub coverage_half_widths: HalfWidthSource,
    pub rejection_level: f64,
}

impl Settings {
    /// Defaults, then `flags`, then `file`.
    pub fn resolve(flags: Overrides, file: Option<Overrides>) -> Result<Settings, AuditError> {
        let o = match file {
            Some(f) => flags.overlay(f),
            None => flags,
        };
        let s = Settings {
            census: o.census,
            received: o.received,
            schema: o.schema,
            half_widths: o.half_widths,
            target_margin: o.target_margin.unwrap_or(0.005),
            confidence: o.confidence.unwrap_or(0.95),
            replicates: o.replicates.unwrap_or(crate::montecarlo::DEFAULT_REPLICATES),
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            sample_sizes: o.sample_sizes.unwrap_or_else(|| DEFAULT_SAMPLE_SIZES.to_vec()),
            quantile: o.quantile.unwrap_or(0.95),
            leader: o.leader,
            runner_up: o.runner_up,
            format: o.format.unwrap_or_default(),
            out_dir: o.out_dir,
            exhaustive: o.exhaustive.unwrap_or(false),
            workers: o.workers,
            include_participation: o.include_participation.unwrap_or(true),
            histogram_bins: o.histogram_bins.unwrap_or(crate::montecarlo::DEFAULT_HISTOGRAM_BINS),
            coverage_half_widths: o.coverage_half_widths.unwrap_or_default(),
            rejection_level: o.rejection_level.unwrap_or(0.01),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), AuditError> {
        let bad = |m: String| Err(AuditError::Config(m));
        if !(self.target_margin > 0.0 && self.target_margin < 1.0) {
            return bad(format!("target_margin {} must be in (0, 1)", self.target_margin));
        }
        if self.confidence >= 1.0 && self.confidence.is_finite() {
            return bad(format!(
                "confidence {} is degenerate: only the interval [0, 1] is certain, and it says nothing",
                self.confidence
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence {} must be in (0, 1)", self.confidence));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return bad(format!("quantile {} must be in (0, 1]", self.quantile));
        }
        if !(self.rejection_level > 0.0 && self.rejection_level < 1.0) {
            return bad(format!("rejection_level {} must be in (0, 1)", self.rejection_level));
        }
        if self.replicates < MIN_REPLICATES {
            return bad(format!("replicates {} must be at least {MIN_REPLICATES}", self.replicates));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample sizes must be a nonempty list of positive integers".into());
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive".into());
        }
        if let (Some(a), Some(b)) = (&self.leader, &self.runner_up) {
            if a == b {
                return bad(format!("leader and runner-up are both `{a}`"));
            }
        }
        Ok(())
    }

    /// Sample size used by coverage and winner-gap: the last one listed.
    pub fn main_sample_size(&self) -> usize {
        *self.sample_sizes.last().expect("checked nonempty")
    }
}

/// Half-widths file: a flat TOML table `id = percentage points`.
pub fn parse_half_widths(text: &str) -> Result<HalfWidths, AuditError> {
    let raw: BTreeMap<String, f64> =
        toml::from_str(text).map_err(|e| AuditError::Config(format!("half-widths file: {e}")))?;
    raw.into_iter()
        .map(|(id, pp)| {
            if pp.is_finite() && pp > 0.0 {
                Ok((id, pp / 100.0))
            } else {
                Err(AuditError::Config(format!("half-width for `{id}` must be positive, got {pp}")))
            }
        })
        .collect()
}

pub fn load_half_widths(path: &Path) -> Result<HalfWidths, AuditError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AuditError::Config(format!("cannot read half-widths {}: {e}", path.display())))?;
    parse_half_widths(&text)
}
