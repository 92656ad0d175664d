//! Domain-mismatch observer.
//!
//! A [`DomainReference`] stores the PSNR histogram of a source corpus under a
//! fixed reconstructor. Calibrating it against an in-domain validation corpus
//! fixes the functional-scope threshold at twice the validation DM. Target
//! batches are then scored the same way and compared to the reference; a DM
//! above the threshold marks the batch as out of domain.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::histogram::{BinningConfig, HistogramError, PerformanceHistogram};
use crate::imageio::{self, Image, ImageError};
use crate::metrics::{MetricsError, PsnrConfig};
use crate::reconstruction::{score_corpus, Reconstructor};
use crate::transport::{dm_metric, TransportError};

/// Version written to and required from reference profiles.
pub const PROFILE_FORMAT_VERSION: u32 = 1;

/// Default minimum number of images per evaluated batch.
pub const DEFAULT_MIN_BATCH: usize = 30;

/// Smallest window accepted by [`sliding_window_observe`].
pub const MIN_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("all {} images failed to load", .0.len())]
    AllImagesFailed(Vec<(PathBuf, ImageError)>),
    #[error("batch of {got} images is below the minimum of {min}")]
    BatchTooSmall { got: usize, min: usize },
    #[error("window must be at least {MIN_WINDOW} and stride at least 1 (window {window}, stride {stride})")]
    InvalidWindow { window: usize, stride: usize },
    #[error("stream of {len} images is shorter than the window of {window}")]
    StreamTooShort { len: usize, window: usize },
    #[error("invalid reference profile: {0}")]
    Profile(String),
    #[error("report does not match reference: {0}")]
    ReportMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Source of report timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// Clock pinned to the Unix epoch, for reproducible output.
    pub fn epoch() -> Self {
        Self::Fixed(DateTime::UNIX_EPOCH)
    }

    pub fn timestamp(&self) -> String {
        let t = match self {
            Self::System => Utc::now(),
            Self::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverConfig {
    pub psnr: PsnrConfig,
    /// Batches smaller than this are rejected rather than judged.
    pub min_batch: usize,
    pub clock: Clock,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            psnr: PsnrConfig::default(),
            min_batch: DEFAULT_MIN_BATCH,
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "validation_dm_dB")]
    pub validation_dm_db: f64,
    #[serde(rename = "threshold_dB")]
    pub threshold_db: f64,
}

impl Calibration {
    /// Threshold at twice the in-domain validation DM.
    pub fn from_validation_dm(validation_dm_db: f64) -> Self {
        Self {
            validation_dm_db,
            threshold_db: 2.0 * validation_dm_db,
        }
    }
}

/// Source-domain profile that target corpora are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainReference {
    histogram: PerformanceHistogram,
    reconstructor: Reconstructor,
    created_from: String,
    calibration: Option<Calibration>,
}

/// On-disk layout of a reference profile.
#[derive(Serialize, Deserialize)]
struct ProfileFile {
    format_version: u32,
    binning: BinningConfig,
    counts: Vec<u64>,
    total: u64,
    reconstructor: Reconstructor,
    created_from: String,
    calibration: Option<Calibration>,
}

impl DomainReference {
    /// Wraps a source histogram; fails if it is empty.
    pub fn new(
        histogram: PerformanceHistogram,
        reconstructor: Reconstructor,
        created_from: impl Into<String>,
    ) -> Result<Self, ObserverError> {
        if histogram.is_empty() {
            return Err(ObserverError::EmptyCorpus);
        }
        Ok(Self {
            histogram,
            reconstructor,
            created_from: created_from.into(),
            calibration: None,
        })
    }

    pub fn histogram(&self) -> &PerformanceHistogram {
        &self.histogram
    }

    pub fn binning(&self) -> &BinningConfig {
        self.histogram.binning()
    }

    pub fn reconstructor(&self) -> &Reconstructor {
        &self.reconstructor
    }

    pub fn created_from(&self) -> &str {
        &self.created_from
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    pub fn threshold_db(&self) -> Option<f64> {
        self.calibration.map(|c| c.threshold_db)
    }

    /// Returns a copy calibrated with a known validation DM.
    pub fn with_validation_dm(&self, validation_dm_db: f64) -> Self {
        Self {
            calibration: Some(Calibration::from_validation_dm(validation_dm_db)),
            ..self.clone()
        }
    }

    /// Scores `validation` and returns a copy calibrated on its DM.
    pub fn calibrate(&self, validation: &[Image], cfg: &ObserverConfig) -> Result<Self, ObserverError> {
        let target = self.score_batch(validation, cfg)?.0;
        let dm = dm_metric(&self.histogram, &target)?.dm_db;
        Ok(self.with_validation_dm(dm))
    }

    /// Stable identifier of the source histogram and reconstructor;
    /// calibration does not change it.
    pub fn reference_id(&self) -> String {
        let mut hasher = Sha256::new();
        let ident = serde_json::json!({
            "binning": self.binning(),
            "counts": self.histogram.counts(),
            "reconstructor": self.reconstructor,
            "created_from": self.created_from,
        });
        hasher.update(ident.to_string().as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    fn score_batch(
        &self,
        images: &[Image],
        cfg: &ObserverConfig,
    ) -> Result<(PerformanceHistogram, Vec<f64>), ObserverError> {
        if images.is_empty() {
            return Err(ObserverError::EmptyCorpus);
        }
        if images.len() < cfg.min_batch {
            return Err(ObserverError::BatchTooSmall {
                got: images.len(),
                min: cfg.min_batch,
            });
        }
        let scores = score_corpus(&self.reconstructor, images, &cfg.psnr)?;
        let hist = PerformanceHistogram::build(&scores, *self.binning())?;
        Ok((hist, scores))
    }

    pub fn to_json(&self) -> Result<String, ObserverError> {
        let file = ProfileFile {
            format_version: PROFILE_FORMAT_VERSION,
            binning: *self.binning(),
            counts: self.histogram.counts().to_vec(),
            total: self.histogram.total(),
            reconstructor: self.reconstructor,
            created_from: self.created_from.clone(),
            calibration: self.calibration,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ObserverError> {
        let file: ProfileFile = serde_json::from_str(s)?;
        if file.format_version != PROFILE_FORMAT_VERSION {
            return Err(ObserverError::Profile(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let histogram = PerformanceHistogram::from_counts(file.binning, file.counts, file.total)?;
        if let Some(c) = file.calibration {
            if !(c.validation_dm_db >= 0.0 && c.validation_dm_db.is_finite()) {
                return Err(ObserverError::Profile(format!("validation DM {}", c.validation_dm_db)));
            }
            if c.threshold_db != 2.0 * c.validation_dm_db {
                return Err(ObserverError::Profile(format!(
                    "threshold {} is not twice the validation DM {}",
                    c.threshold_db, c.validation_dm_db
                )));
            }
        }
        let mut reference = Self::new(histogram, file.reconstructor, file.created_from)
            .map_err(|_| ObserverError::Profile("histogram is empty".into()))?;
        reference.calibration = file.calibration;
        Ok(reference)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ObserverError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|source| ObserverError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ObserverError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ObserverError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InScope,
    OutOfDomain,
    Uncalibrated,
}

impl Verdict {
    /// A DM equal to the threshold is still in scope.
    pub fn judge(dm_db: f64, calibration: Option<&Calibration>) -> Self {
        match calibration {
            None => Self::Uncalibrated,
            Some(c) if dm_db <= c.threshold_db => Self::InScope,
            Some(_) => Self::OutOfDomain,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::InScope => "in_scope",
            Self::OutOfDomain => "out_of_domain",
            Self::Uncalibrated => "uncalibrated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmReport {
    #[serde(rename = "dm_dB")]
    pub dm_db: f64,
    #[serde(rename = "mean_psnr_dB")]
    pub mean_psnr_db: f64,
    #[serde(rename = "stddev_psnr_dB")]
    pub stddev_psnr_db: f64,
    pub sample_count: usize,
    pub verdict: Verdict,
    #[serde(rename = "threshold_dB")]
    pub threshold_db: Option<f64>,
    pub reference_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_index: Option<usize>,
    pub timestamp: String,
}

impl DmReport {
    /// Checks that the report was produced against `reference` and that its
    /// verdict follows from its DM and the reference threshold.
    pub fn verify_against(&self, reference: &DomainReference) -> Result<(), ObserverError> {
        let id = reference.reference_id();
        if self.reference_id != id {
            return Err(ObserverError::ReportMismatch(format!(
                "reference id {} vs {id}",
                self.reference_id
            )));
        }
        if self.threshold_db != reference.threshold_db() {
            return Err(ObserverError::ReportMismatch(format!(
                "threshold {:?} vs {:?}",
                self.threshold_db,
                reference.threshold_db()
            )));
        }
        let expected = Verdict::judge(self.dm_db, reference.calibration());
        if self.verdict != expected {
            return Err(ObserverError::ReportMismatch(format!(
                "verdict {} but DM {} implies {expected}",
                self.verdict, self.dm_db
            )));
        }
        Ok(())
    }

    /// One-line summary with values rounded to 0.01 dB.
    pub fn summary(&self) -> String {
        let threshold = self
            .threshold_db
            .map_or_else(|| "none".to_string(), |t| format!("{t:.2} dB"));
        format!(
            "DM {:.2} dB, threshold {threshold}, verdict {} (n = {}, mean PSNR {:.2} dB)",
            self.dm_db, self.verdict, self.sample_count, self.mean_psnr_db
        )
    }
}

fn mean_and_stddev(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores every image in `dir` and builds an uncalibrated reference. Files
/// that fail to load are returned alongside; the build fails only if none
/// loads.
pub fn build_reference_from_dir(
    dir: impl AsRef<Path>,
    reconstructor: Reconstructor,
    binning: BinningConfig,
    cfg: &ObserverConfig,
) -> Result<(DomainReference, Vec<(PathBuf, ImageError)>), ObserverError> {
    let dir = dir.as_ref();
    let load = imageio::load_corpus(dir)?;
    if load.images.is_empty() {
        return Err(if load.failures.is_empty() {
            ObserverError::EmptyCorpus
        } else {
            ObserverError::AllImagesFailed(load.failures)
        });
    }
    let reference = build_reference(&load.images(), reconstructor, binning, dir.display().to_string(), cfg)?;
    Ok((reference, load.failures))
}

/// Scores a source corpus and builds an uncalibrated reference.
pub fn build_reference(
    images: &[Image],
    reconstructor: Reconstructor,
    binning: BinningConfig,
    created_from: impl Into<String>,
    cfg: &ObserverConfig,
) -> Result<DomainReference, ObserverError> {
    if images.is_empty() {
        return Err(ObserverError::EmptyCorpus);
    }
    let scores = score_corpus(&reconstructor, images, &cfg.psnr)?;
    let histogram = PerformanceHistogram::build(&scores, binning)?;
    DomainReference::new(histogram, reconstructor, created_from)
}

fn report_for(
    reference: &DomainReference,
    hist: &PerformanceHistogram,
    scores: &[f64],
    window_index: Option<usize>,
    reference_id: &str,
    cfg: &ObserverConfig,
) -> Result<DmReport, ObserverError> {
    let dm_db = dm_metric(reference.histogram(), hist)?.dm_db;
    let (mean, sd) = mean_and_stddev(scores);
    Ok(DmReport {
        dm_db,
        mean_psnr_db: mean,
        stddev_psnr_db: sd,
        sample_count: scores.len(),
        verdict: Verdict::judge(dm_db, reference.calibration()),
        threshold_db: reference.threshold_db(),
        reference_id: reference_id.to_string(),
        window_index,
        timestamp: cfg.clock.timestamp(),
    })
}

/// Scores a target batch with the reference's reconstructor and binning and
/// judges it against the reference threshold.
pub fn evaluate_batch(
    reference: &DomainReference,
    images: &[Image],
    cfg: &ObserverConfig,
) -> Result<DmReport, ObserverError> {
    let (hist, scores) = reference.score_batch(images, cfg)?;
    report_for(reference, &hist, &scores, None, &reference.reference_id(), cfg)
}

/// One report per complete window position `0, stride, 2*stride, ...`; each
/// equals [`evaluate_batch`] on that window.
pub fn sliding_window_observe(
    reference: &DomainReference,
    stream: &[Image],
    window: usize,
    stride: usize,
    cfg: &ObserverConfig,
) -> Result<Vec<DmReport>, ObserverError> {
    if window < MIN_WINDOW || stride == 0 {
        return Err(ObserverError::InvalidWindow { window, stride });
    }
    if stream.len() < window {
        return Err(ObserverError::StreamTooShort {
            len: stream.len(),
            window,
        });
    }
    if window < cfg.min_batch {
        return Err(ObserverError::BatchTooSmall {
            got: window,
            min: cfg.min_batch,
        });
    }
    // score once; windows overlap when stride < window
    let scores = score_corpus(reference.reconstructor(), stream, &cfg.psnr)?;
    let id = reference.reference_id();
    (0..=stream.len() - window)
        .step_by(stride)
        .enumerate()
        .map(|(i, start)| {
            let slice = &scores[start..start + window];
            let hist = PerformanceHistogram::build(slice, *reference.binning())?;
            report_for(reference, &hist, slice, Some(i), &id, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{normalize, RawImage};

    fn corpus(n: usize, seed: u64, spread: f64) -> Vec<Image> {
        (0..n as u64)
            .map(|k| {
                let vals: Vec<u8> = (0..12 * 12 * 3u64)
                    .map(|i| {
                        let base = 128.0 + spread * (crate::hashing::uniform(seed, &[k, i]) - 0.5);
                        base.clamp(0.0, 255.0) as u8
                    })
                    .collect();
                normalize(&RawImage::new(12, 12, vals).unwrap())
            })
            .collect()
    }

    fn small_cfg() -> ObserverConfig {
        ObserverConfig {
            min_batch: 1,
            clock: Clock::epoch(),
            ..Default::default()
        }
    }

    fn reference(images: &[Image]) -> DomainReference {
        build_reference(
            images,
            Reconstructor::quantize(8).unwrap(),
            BinningConfig::default(),
            "unit-test",
            &small_cfg(),
        )
        .unwrap()
    }

    #[test]
    fn own_corpus_has_zero_dm() {
        let train = corpus(20, 1, 200.0);
        let r = reference(&train);
        assert_eq!(r.histogram().total(), 20);
        assert!(r.calibration().is_none());

        let report = evaluate_batch(&r, &train, &small_cfg()).unwrap();
        assert_eq!(report.dm_db, 0.0);
        assert_eq!(report.verdict, Verdict::Uncalibrated);

        let calibrated = r.calibrate(&train, &small_cfg()).unwrap();
        assert_eq!(
            calibrated.calibration(),
            Some(&Calibration {
                validation_dm_db: 0.0,
                threshold_db: 0.0
            })
        );
        let report = evaluate_batch(&calibrated, &train, &small_cfg()).unwrap();
        assert_eq!(report.verdict, Verdict::InScope);
    }

    #[test]
    fn threshold_is_twice_validation_dm() {
        let r = reference(&corpus(5, 1, 100.0));
        assert_eq!(r.with_validation_dm(1.31).threshold_db(), Some(2.62));
        assert_eq!(r.with_validation_dm(0.51).threshold_db(), Some(1.02));
    }

    #[test]
    fn verdict_boundary() {
        let c = Calibration::from_validation_dm(0.5);
        assert_eq!(Verdict::judge(1.0, Some(&c)), Verdict::InScope);
        assert_eq!(Verdict::judge(1.0 + 1e-12, Some(&c)), Verdict::OutOfDomain);
        assert_eq!(Verdict::judge(3.0, None), Verdict::Uncalibrated);
    }

    #[test]
    fn calibration_is_idempotent() {
        let r = reference(&corpus(20, 1, 200.0));
        let val = corpus(20, 2, 200.0);
        let a = r.calibrate(&val, &small_cfg()).unwrap();
        let b = a.calibrate(&val, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reference_id(), r.reference_id());
    }

    #[test]
    fn empty_and_small_batches() {
        let r = reference(&corpus(5, 1, 100.0));
        assert!(matches!(
            evaluate_batch(&r, &[], &small_cfg()),
            Err(ObserverError::EmptyCorpus)
        ));
        assert!(matches!(
            r.calibrate(&[], &small_cfg()),
            Err(ObserverError::EmptyCorpus)
        ));
        let strict = ObserverConfig::default();
        assert!(matches!(
            evaluate_batch(&r, &corpus(5, 3, 100.0), &strict),
            Err(ObserverError::BatchTooSmall { got: 5, min: 30 })
        ));
        assert!(matches!(
            build_reference(&[], Reconstructor::Identity, BinningConfig::default(), "", &strict),
            Err(ObserverError::EmptyCorpus)
        ));
    }

    #[test]
    fn report_is_deterministic_with_fixed_clock() {
        let r = reference(&corpus(20, 1, 200.0)).with_validation_dm(0.2);
        let batch = corpus(15, 9, 60.0);
        let a = evaluate_batch(&r, &batch, &small_cfg()).unwrap();
        let b = evaluate_batch(&r, &batch, &small_cfg()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.timestamp, "1970-01-01T00:00:00Z");
        assert_eq!(a.sample_count, 15);
    }

    #[test]
    fn report_json_shape_and_verification() {
        let r = reference(&corpus(20, 1, 200.0)).with_validation_dm(0.25);
        let report = evaluate_batch(&r, &corpus(12, 4, 200.0), &small_cfg()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&report).unwrap();
        for key in [
            "dm_dB",
            "mean_psnr_dB",
            "stddev_psnr_dB",
            "sample_count",
            "verdict",
            "threshold_dB",
            "reference_id",
            "timestamp",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("window_index").is_none());

        let back: DmReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, report);
        back.verify_against(&r).unwrap();

        let mut forged = report.clone();
        forged.verdict = match forged.verdict {
            Verdict::InScope => Verdict::OutOfDomain,
            _ => Verdict::InScope,
        };
        assert!(forged.verify_against(&r).is_err());
        assert!(report.verify_against(&r.with_validation_dm(9.0)).is_err());
        let other = reference(&corpus(20, 5, 10.0));
        assert!(report.verify_against(&other).is_err());
    }

    #[test]
    fn profile_round_trip() {
        let r = reference(&corpus(20, 1, 200.0)).with_validation_dm(0.1 + 0.2);
        let text = r.to_json().unwrap();
        let back = DomainReference::from_json(&text).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["binning"]["width_dB"], 0.5);
        assert_eq!(v["reconstructor"]["kind"], "quantize");
        assert_eq!(v["calibration"]["threshold_dB"].as_f64(), Some(2.0 * (0.1 + 0.2)));

        let uncal = reference(&corpus(5, 1, 100.0));
        assert_eq!(DomainReference::from_json(&uncal.to_json().unwrap()).unwrap(), uncal);
    }

    #[test]
    fn profile_validation() {
        let r = reference(&corpus(5, 1, 100.0)).with_validation_dm(1.0);
        let mut v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        v["calibration"]["threshold_dB"] = 3.0.into();
        assert!(matches!(
            DomainReference::from_json(&v.to_string()),
            Err(ObserverError::Profile(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        v["total"] = 999.into();
        assert!(matches!(
            DomainReference::from_json(&v.to_string()),
            Err(ObserverError::Histogram(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        v["format_version"] = 7.into();
        assert!(matches!(
            DomainReference::from_json(&v.to_string()),
            Err(ObserverError::Profile(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        v["binning"]["width_dB"] = 0.3.into();
        assert!(DomainReference::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn sliding_windows() {
        let r = reference(&corpus(20, 1, 200.0)).with_validation_dm(0.3);
        let stream = corpus(35, 8, 150.0);
        let cfg = small_cfg();

        let parts = sliding_window_observe(&r, &stream, 10, 10, &cfg).unwrap();
        assert_eq!(parts.len(), 3);
        for (i, rep) in parts.iter().enumerate() {
            let direct = evaluate_batch(&r, &stream[i * 10..(i + 1) * 10], &cfg).unwrap();
            assert_eq!(rep.window_index, Some(i));
            assert_eq!(
                DmReport {
                    window_index: None,
                    ..rep.clone()
                },
                direct
            );
        }
        let overlapping = sliding_window_observe(&r, &stream, 12, 5, &cfg).unwrap();
        assert_eq!(overlapping.len(), 5);
        let direct = evaluate_batch(&r, &stream[20..32], &cfg).unwrap();
        assert_eq!(overlapping[4].dm_db, direct.dm_db);

        assert!(matches!(
            sliding_window_observe(&r, &stream, 9, 1, &cfg),
            Err(ObserverError::InvalidWindow { .. })
        ));
        assert!(matches!(
            sliding_window_observe(&r, &stream, 10, 0, &cfg),
            Err(ObserverError::InvalidWindow { .. })
        ));
        assert!(matches!(
            sliding_window_observe(&r, &stream[..5], 10, 1, &cfg),
            Err(ObserverError::StreamTooShort { len: 5, window: 10 })
        ));
        assert!(matches!(
            sliding_window_observe(&r, &stream, 10, 1, &ObserverConfig::default()),
            Err(ObserverError::BatchTooSmall { .. })
        ));
    }

    #[test]
    fn directory_build_tolerates_partial_failures() {
        let dir = tempfile::tempdir().unwrap();
        for (i, img) in corpus(3, 1, 100.0).iter().enumerate() {
            imageio::write_ppm(dir.path().join(format!("{i}.ppm")), &imageio::denormalize(img)).unwrap();
        }
        fs::write(dir.path().join("bad.ppm"), b"P6\n9 9\n255\n").unwrap();
        let (r, failures) = build_reference_from_dir(
            dir.path(),
            Reconstructor::quantize(8).unwrap(),
            BinningConfig::default(),
            &small_cfg(),
        )
        .unwrap();
        assert_eq!(r.histogram().total(), 3);
        assert_eq!(failures.len(), 1);

        let broken = tempfile::tempdir().unwrap();
        fs::write(broken.path().join("x.ppm"), b"nope").unwrap();
        assert!(matches!(
            build_reference_from_dir(
                broken.path(),
                Reconstructor::Identity,
                BinningConfig::default(),
                &small_cfg()
            ),
            Err(ObserverError::AllImagesFailed(_))
        ));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_reference_from_dir(
                empty.path(),
                Reconstructor::Identity,
                BinningConfig::default(),
                &small_cfg()
            ),
            Err(ObserverError::EmptyCorpus)
        ));
    }
}
