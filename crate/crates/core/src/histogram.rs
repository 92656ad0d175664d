//! Binned PSNR distributions.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("binning mismatch: {0:?} vs {1:?}")]
    BinningMismatch(BinningConfig, BinningConfig),
    #[error("histogram is empty")]
    Empty,
    #[error("score {0} is not a number")]
    NotANumber(f64),
    #[error("inconsistent histogram: {0}")]
    Inconsistent(String),
}

/// Uniform bin grid over `[lo_db, hi_db)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBinning")]
pub struct BinningConfig {
    #[serde(rename = "lo_dB")]
    lo_db: f64,
    #[serde(rename = "hi_dB")]
    hi_db: f64,
    #[serde(rename = "width_dB")]
    width_db: f64,
    #[serde(skip)]
    bins: usize,
}

#[derive(Deserialize)]
struct RawBinning {
    #[serde(rename = "lo_dB")]
    lo_db: f64,
    #[serde(rename = "hi_dB")]
    hi_db: f64,
    #[serde(rename = "width_dB")]
    width_db: f64,
}

impl TryFrom<RawBinning> for BinningConfig {
    type Error = HistogramError;

    fn try_from(raw: RawBinning) -> Result<Self, Self::Error> {
        Self::new(raw.lo_db, raw.hi_db, raw.width_db)
    }
}

impl Default for BinningConfig {
    /// 10 to 45 dB in 0.5 dB bins.
    fn default() -> Self {
        Self::new(10.0, 45.0, 0.5).expect("default binning is valid")
    }
}

impl BinningConfig {
    pub fn new(lo_db: f64, hi_db: f64, width_db: f64) -> Result<Self, HistogramError> {
        let err = |m: String| Err(HistogramError::InvalidBinning(m));
        if !(lo_db.is_finite() && hi_db.is_finite() && width_db.is_finite()) {
            return err("edges and width must be finite".into());
        }
        if lo_db >= hi_db {
            return err(format!("lo {lo_db} must be below hi {hi_db}"));
        }
        if width_db <= 0.0 {
            return err(format!("width {width_db} must be positive"));
        }
        let ratio = (hi_db - lo_db) / width_db;
        let bins = ratio.round();
        if bins < 1.0 || (ratio - bins).abs() > 1e-9 * bins.max(1.0) {
            return err(format!("(hi - lo) / width = {ratio} is not a positive integer"));
        }
        Ok(Self {
            lo_db,
            hi_db,
            width_db,
            bins: bins as usize,
        })
    }

    pub fn lo_db(&self) -> f64 {
        self.lo_db
    }

    pub fn hi_db(&self) -> f64 {
        self.hi_db
    }

    pub fn width_db(&self) -> f64 {
        self.width_db
    }

    pub fn bin_count(&self) -> usize {
        self.bins
    }

    /// Bin for `score`; out-of-support scores land in the edge bins.
    pub fn bin_index(&self, score: f64) -> Result<usize, HistogramError> {
        if score.is_nan() {
            return Err(HistogramError::NotANumber(score));
        }
        let k = ((score - self.lo_db) / self.width_db).floor();
        Ok(if k <= 0.0 { 0 } else { (k as usize).min(self.bins - 1) })
    }

    /// Lower and upper edge of bin `k`.
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let lo = self.lo_db + k as f64 * self.width_db;
        (lo, lo + self.width_db)
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lo_db + (k as f64 + 0.5) * self.width_db
    }
}

impl std::fmt::Display for BinningConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.lo_db, self.hi_db, self.width_db)
    }
}

impl std::str::FromStr for BinningConfig {
    type Err = HistogramError;

    /// Parses `lo:hi:width`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| HistogramError::InvalidBinning(format!("cannot parse {s:?}")))?;
        match parts[..] {
            [lo, hi, width] => Self::new(lo, hi, width),
            _ => Err(HistogramError::InvalidBinning(format!(
                "expected lo:hi:width, got {s:?}"
            ))),
        }
    }
}

/// Integer counts of PSNR scores per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceHistogram {
    binning: BinningConfig,
    counts: Vec<u64>,
    total: u64,
}

impl PerformanceHistogram {
    /// All-zero histogram; the identity of [`merge`](Self::merge).
    pub fn empty(binning: BinningConfig) -> Self {
        Self {
            binning,
            counts: vec![0; binning.bin_count()],
            total: 0,
        }
    }

    /// Rebuilds a histogram from stored counts, checking consistency.
    pub fn from_counts(binning: BinningConfig, counts: Vec<u64>, total: u64) -> Result<Self, HistogramError> {
        if counts.len() != binning.bin_count() {
            return Err(HistogramError::Inconsistent(format!(
                "{} counts for {} bins",
                counts.len(),
                binning.bin_count()
            )));
        }
        let sum: u64 = counts.iter().sum();
        if sum != total {
            return Err(HistogramError::Inconsistent(format!(
                "counts sum to {sum}, total is {total}"
            )));
        }
        Ok(Self { binning, counts, total })
    }

    pub fn build(scores: &[f64], binning: BinningConfig) -> Result<Self, HistogramError> {
        if scores.is_empty() {
            return Err(HistogramError::Empty);
        }
        let mut h = Self::empty(binning);
        for &s in scores {
            h.add(s)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, score: f64) -> Result<(), HistogramError> {
        let k = self.binning.bin_index(score)?;
        self.counts[k] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Result<Self, HistogramError> {
        if self.binning != other.binning {
            return Err(HistogramError::BinningMismatch(self.binning, other.binning));
        }
        Ok(Self {
            binning: self.binning,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            total: self.total + other.total,
        })
    }

    pub fn binning(&self) -> &BinningConfig {
        &self.binning
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Bin masses `count / total`.
    pub fn masses(&self) -> Result<Vec<f64>, HistogramError> {
        if self.is_empty() {
            return Err(HistogramError::Empty);
        }
        let n = self.total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }

    /// Mass-weighted mean and population standard deviation of bin centers.
    pub fn summary_stats(&self) -> Result<(f64, f64), HistogramError> {
        let masses = self.masses()?;
        let centers = (0..masses.len()).map(|k| self.binning.bin_center(k));
        let mean: f64 = centers.clone().zip(&masses).map(|(c, m)| c * m).sum();
        let var: f64 = centers.zip(&masses).map(|(c, m)| m * (c - mean).powi(2)).sum();
        Ok((mean, var.max(0.0).sqrt()))
    }

    /// Writes `bin_lo_dB,bin_hi_dB,count,mass` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_lo_dB,bin_hi_dB,count,mass")?;
        let n = self.total.max(1) as f64;
        for (k, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.binning.bin_edges(k);
            writeln!(w, "{lo},{hi},{c},{}", c as f64 / n)?;
        }
        Ok(())
    }
}
