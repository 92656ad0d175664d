//! Reconstruction quality (PSNR) and segmentation quality (mIoU).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{denormalize_value, Image, LabelMap, IGNORE_LABEL};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("class count mismatch: {0} vs {1}")]
    ClassCountMismatch(usize, usize),
    #[error("prediction contains an ignore label at pixel {0}")]
    IgnoreInPrediction(usize),
    #[error("no class has any ground-truth or predicted pixels")]
    NoClasses,
    #[error("invalid PSNR configuration: {0}")]
    InvalidConfig(String),
}

/// Parameters of the PSNR computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrConfig {
    /// Peak intensity of the denormalized range.
    pub peak: f64,
    /// Ceiling in dB, returned for identical images.
    #[serde(rename = "cap_dB")]
    pub cap_db: f64,
}

impl Default for PsnrConfig {
    fn default() -> Self {
        Self {
            peak: 255.0,
            cap_db: 99.0,
        }
    }
}

impl PsnrConfig {
    pub fn new(peak: f64, cap_db: f64) -> Result<Self, MetricsError> {
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(MetricsError::InvalidConfig(format!("peak {peak}")));
        }
        if !cap_db.is_finite() {
            return Err(MetricsError::InvalidConfig(format!("cap {cap_db}")));
        }
        Ok(Self { peak, cap_db })
    }
}

/// Sum of squared differences of the 8-bit denormalized images.
///
/// Differences are integers, so the sum is exact in `u64`.
pub fn squared_error_sum(a: &Image, b: &Image) -> Result<u64, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch(
            a.height(),
            a.width(),
            b.height(),
            b.width(),
        ));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = i64::from(denormalize_value(x)) - i64::from(denormalize_value(y));
            (d * d) as u64
        })
        .sum())
}

/// PSNR in dB between an image and its reconstruction.
///
/// Both images are denormalized to `[0, 255]`. The result never exceeds
/// `cfg.cap_db`, and equals it when the images are identical.
pub fn psnr(original: &Image, reconstruction: &Image, cfg: &PsnrConfig) -> Result<f64, MetricsError> {
    let sse = squared_error_sum(original, reconstruction)?;
    if sse == 0 {
        return Ok(cfg.cap_db);
    }
    let n = original.data().len() as f64;
    let mse = sse as f64 / n;
    Ok(psnr_from_mse(mse, cfg))
}

/// `10 * log10(peak^2 / mse)`, capped.
pub fn psnr_from_mse(mse: f64, cfg: &PsnrConfig) -> f64 {
    if mse <= 0.0 {
        return cfg.cap_db;
    }
    (10.0 * (cfg.peak * cfg.peak / mse).log10()).min(cfg.cap_db)
}

/// Per-class true-positive, false-positive and false-negative pixel counts,
/// summed over every accumulated image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionAccumulator {
    tp: Vec<u64>,
    fp: Vec<u64>,
    #[serde(rename = "fn")]
    fn_: Vec<u64>,
}

impl ConfusionAccumulator {
    pub fn new(class_count: usize) -> Self {
        Self {
            tp: vec![0; class_count],
            fp: vec![0; class_count],
            fn_: vec![0; class_count],
        }
    }

    pub fn class_count(&self) -> usize {
        self.tp.len()
    }

    pub fn true_positives(&self) -> &[u64] {
        &self.tp
    }

    pub fn false_positives(&self) -> &[u64] {
        &self.fp
    }

    pub fn false_negatives(&self) -> &[u64] {
        &self.fn_
    }

    /// Adds one ground-truth / prediction pair. On error the accumulator is
    /// left unchanged.
    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<(), MetricsError> {
        if !gt.same_shape(pred) {
            return Err(MetricsError::ShapeMismatch(
                gt.height(),
                gt.width(),
                pred.height(),
                pred.width(),
            ));
        }
        for lm in [gt, pred] {
            if lm.class_count() != self.class_count() {
                return Err(MetricsError::ClassCountMismatch(self.class_count(), lm.class_count()));
            }
        }
        if let Some(i) = pred.data().iter().position(|&p| p == IGNORE_LABEL) {
            return Err(MetricsError::IgnoreInPrediction(i));
        }
        for (&g, &p) in gt.data().iter().zip(pred.data()) {
            if g == IGNORE_LABEL {
                continue;
            }
            let (g, p) = (usize::from(g), usize::from(p));
            if g == p {
                self.tp[g] += 1;
            } else {
                self.fp[p] += 1;
                self.fn_[g] += 1;
            }
        }
        Ok(())
    }

    /// Bin-wise sum of two accumulators.
    pub fn merge(&self, other: &Self) -> Result<Self, MetricsError> {
        if self.class_count() != other.class_count() {
            return Err(MetricsError::ClassCountMismatch(
                self.class_count(),
                other.class_count(),
            ));
        }
        let add = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Self {
            tp: add(&self.tp, &other.tp),
            fp: add(&self.fp, &other.fp),
            fn_: add(&self.fn_, &other.fn_),
        })
    }

    /// IoU per class, `None` for classes absent from both ground truth and
    /// prediction.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        (0..self.class_count())
            .map(|s| {
                let denom = self.tp[s] + self.fp[s] + self.fn_[s];
                (denom > 0).then(|| self.tp[s] as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over the classes that occur.
    pub fn miou(&self) -> Result<f64, MetricsError> {
        let ious: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return Err(MetricsError::NoClasses);
        }
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// mIoU of a whole corpus of ground-truth / prediction pairs.
pub fn corpus_miou<'a, I>(pairs: I, class_count: usize) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a LabelMap, &'a LabelMap)>,
{
    let mut acc = ConfusionAccumulator::new(class_count);
    for (gt, pred) in pairs {
        acc.accumulate(gt, pred)?;
    }
    acc.miou()
}

/// Degradation of `target_miou` relative to `reference_miou`. Negative when
/// the target outperforms the reference.
pub fn delta_miou(reference_miou: f64, target_miou: f64) -> f64 {
    reference_miou - target_miou
}
