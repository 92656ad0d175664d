//! Seeded synthetic corpora.
//!
//! Four image kinds stand in for real datasets. Gradient images are smooth
//! ramps that survive coarse quantization well; noise images are the
//! opposite. Checker and blotch images come with label maps so that
//! segmentation scores can be manufactured with [`perturb_labels`].
//!
//! Every random draw is a hash of the seed and a position key, so a corpus is
//! identical regardless of thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{approx_normal, hash_keys, uniform};
use crate::imageio::{self, Image, ImageError, LabelMap, RawImage, CHANNELS, IGNORE_LABEL};

pub const MIN_SIDE: usize = 8;
pub const CHECKER_CLASSES: usize = 4;
pub const BLOTCH_CLASSES: usize = 5;

const CHECKER_BLOCK: usize = 8;

// stream tags keep draws for different purposes independent
const TAG_IMAGE: u64 = 1;
const TAG_PIXEL: u64 = 2;
const TAG_NOISE_SHIFT: u64 = 3;
const TAG_FLIP: u64 = 4;
const TAG_FLIP_CLASS: u64 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("count must be at least 1")]
    EmptyCount,
    #[error("dimensions {height}x{width} are below {MIN_SIDE}x{MIN_SIDE}")]
    TooSmall { height: usize, width: usize },
    #[error("brightness offset {0} is outside [-1, 1]")]
    Brightness(f64),
    #[error("blur factor must be at least 1")]
    BlurFactor,
    #[error("noise amplitude {0} is outside [0, 2]")]
    NoiseAmplitude(f64),
    #[error("flip fraction {0} is outside [0, 1]")]
    FlipFraction(f64),
    #[error("unknown corpus kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Gradient,
    Checker,
    Noise,
    Blotch,
}

impl CorpusKind {
    pub fn class_count(self) -> Option<usize> {
        match self {
            Self::Checker => Some(CHECKER_CLASSES),
            Self::Blotch => Some(BLOTCH_CLASSES),
            Self::Gradient | Self::Noise => None,
        }
    }
}

impl std::str::FromStr for CorpusKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradient" => Ok(Self::Gradient),
            "checker" => Ok(Self::Checker),
            "noise" => Ok(Self::Noise),
            "blotch" => Ok(Self::Blotch),
            other => Err(SynthError::UnknownKind(other.to_string())),
        }
    }
}

/// Global transform applied to every image: brightness, then box blur, then
/// additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Shift {
    /// Added in normalized units.
    pub brightness_offset: f64,
    /// Side of the centered box filter; 1 leaves the image unchanged.
    pub blur_factor: u32,
    /// Clipping bound of the additive noise in normalized units. The noise is
    /// approximately Gaussian with standard deviation half this bound.
    pub noise_amplitude: f64,
}

impl Default for Shift {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Shift {
    pub const IDENTITY: Self = Self {
        brightness_offset: 0.0,
        blur_factor: 1,
        noise_amplitude: 0.0,
    };

    pub fn noise(amplitude: f64) -> Self {
        Self {
            noise_amplitude: amplitude,
            ..Self::IDENTITY
        }
    }

    pub fn is_identity(&self) -> bool {
        self.brightness_offset == 0.0 && self.blur_factor == 1 && self.noise_amplitude == 0.0
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(-1.0..=1.0).contains(&self.brightness_offset) {
            return Err(SynthError::Brightness(self.brightness_offset));
        }
        if self.blur_factor == 0 {
            return Err(SynthError::BlurFactor);
        }
        if !(0.0..=2.0).contains(&self.noise_amplitude) {
            return Err(SynthError::NoiseAmplitude(self.noise_amplitude));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kind: CorpusKind,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    #[serde(default)]
    pub shift: Shift,
}

impl CorpusSpec {
    pub fn new(kind: CorpusKind, count: usize, height: usize, width: usize, seed: u64) -> Self {
        Self {
            kind,
            count,
            height,
            width,
            seed,
            shift: Shift::IDENTITY,
        }
    }

    pub fn with_shift(self, shift: Shift) -> Self {
        Self { shift, ..self }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.count == 0 {
            return Err(SynthError::EmptyCount);
        }
        if self.height < MIN_SIDE || self.width < MIN_SIDE {
            return Err(SynthError::TooSmall {
                height: self.height,
                width: self.width,
            });
        }
        self.shift.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub images: Vec<Image>,
    /// Present for checker and blotch corpora.
    pub labels: Option<Vec<LabelMap>>,
}

impl SynthCorpus {
    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.first()).map(LabelMap::class_count)
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let pairs: Vec<(Image, Option<LabelMap>)> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let (raw, labels) = base_image(spec, i as u64);
            let raw = apply_shift(spec, i as u64, raw);
            (imageio::normalize(&raw), labels)
        })
        .collect();
    let mut images = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for (img, lab) in pairs {
        images.push(img);
        labels.extend(lab);
    }
    Ok(SynthCorpus {
        images,
        labels: spec.kind.class_count().map(|_| labels),
    })
}

fn u8_of(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn base_image(spec: &CorpusSpec, index: u64) -> (RawImage, Option<LabelMap>) {
    let (h, w) = (spec.height, spec.width);
    let draw = |k: u64| uniform(spec.seed, &[TAG_IMAGE, index, k]);
    let mut data = vec![0u8; h * w * CHANNELS];
    let mut labels = None;
    match spec.kind {
        CorpusKind::Gradient => {
            // bases sit between 2.5 and 4.5 steps of an 8-level quantizer
            let step = 255.0 / 7.0;
            let theta = std::f64::consts::TAU * draw(0);
            let (s, c) = theta.sin_cos();
            let base: Vec<f64> = (0..3).map(|ch| step * (2.5 + 2.0 * draw(1 + ch))).collect();
            let contrast: Vec<f64> = (0..3).map(|ch| 4.0 + 36.0 * draw(4 + ch)).collect();
            for y in 0..h {
                let fy = y as f64 / (h - 1) as f64 - 0.5;
                for x in 0..w {
                    let t = c * (x as f64 / (w - 1) as f64 - 0.5) + s * fy;
                    for ch in 0..CHANNELS {
                        data[(y * w + x) * CHANNELS + ch] = u8_of(base[ch] + contrast[ch] * t);
                    }
                }
            }
        }
        CorpusKind::Noise => {
            for (p, v) in data.iter_mut().enumerate() {
                *v = (hash_keys(spec.seed, &[TAG_PIXEL, index, p as u64]) >> 56) as u8;
            }
        }
        CorpusKind::Checker => {
            let ox = (draw(0) * CHECKER_BLOCK as f64) as usize;
            let oy = (draw(1) * CHECKER_BLOCK as f64) as usize;
            let mut ids = vec![0u8; h * w];
            for y in 0..h {
                for x in 0..w {
                    let class = ((x + ox) / CHECKER_BLOCK + (y + oy) / CHECKER_BLOCK) % CHECKER_CLASSES;
                    ids[y * w + x] = class as u8;
                }
            }
            fill_by_class(&mut data, &ids, |class, ch| checker_palette(class)[ch]);
            labels = Some(ids);
        }
        CorpusKind::Blotch => {
            let centers: Vec<(f64, f64)> = (0..BLOTCH_CLASSES as u64)
                .map(|r| (draw(2 * r) * h as f64, draw(2 * r + 1) * w as f64))
                .collect();
            let colors: Vec<[f64; 3]> = (0..BLOTCH_CLASSES as u64)
                .map(|r| std::array::from_fn(|ch| 30.0 + 195.0 * draw(100 + 3 * r + ch as u64)))
                .collect();
            let mut ids = vec![0u8; h * w];
            for y in 0..h {
                for x in 0..w {
                    let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
                    // nearest center, lowest region ID on ties
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (r, &(cy, cx)) in centers.iter().enumerate() {
                        let d = (py - cy).powi(2) + (px - cx).powi(2);
                        if d < best_d {
                            best = r;
                            best_d = d;
                        }
                    }
                    ids[y * w + x] = best as u8;
                }
            }
            fill_by_class(&mut data, &ids, |class, ch| colors[class][ch]);
            labels = Some(ids);
        }
    }
    let raw = RawImage::new(h, w, data).expect("generated buffer matches dimensions");
    let labels = labels
        .map(|ids| LabelMap::new(h, w, spec.kind.class_count().unwrap_or(1), ids).expect("generated IDs are in range"));
    (raw, labels)
}

fn checker_palette(class: usize) -> [f64; 3] {
    const PALETTE: [[f64; 3]; CHECKER_CLASSES] = [
        [200.0, 60.0, 60.0],
        [60.0, 170.0, 70.0],
        [50.0, 80.0, 190.0],
        [220.0, 210.0, 90.0],
    ];
    PALETTE[class]
}

fn fill_by_class(data: &mut [u8], ids: &[u8], color: impl Fn(usize, usize) -> f64) {
    for (p, &id) in ids.iter().enumerate() {
        for ch in 0..CHANNELS {
            data[p * CHANNELS + ch] = u8_of(color(usize::from(id), ch));
        }
    }
}

fn apply_shift(spec: &CorpusSpec, index: u64, raw: RawImage) -> RawImage {
    let shift = spec.shift;
    if shift.is_identity() {
        return raw;
    }
    let (h, w) = (raw.height(), raw.width());
    let mut vals: Vec<f64> = raw.data().iter().map(|&v| f64::from(v)).collect();
    if shift.brightness_offset != 0.0 {
        let offset = shift.brightness_offset * 127.5;
        for v in &mut vals {
            *v = (*v + offset).clamp(0.0, 255.0);
        }
    }
    if shift.blur_factor > 1 {
        vals = box_blur(&vals, h, w, shift.blur_factor as usize);
    }
    if shift.noise_amplitude > 0.0 {
        let a = shift.noise_amplitude;
        for (p, v) in vals.iter_mut().enumerate() {
            let (pixel, ch) = ((p / CHANNELS) as u64, (p % CHANNELS) as u64);
            let z = approx_normal(spec.seed, &[TAG_NOISE_SHIFT, index, pixel, ch]);
            *v += (z * a / 2.0).clamp(-a, a) * 127.5;
        }
    }
    let data = vals.into_iter().map(u8_of).collect();
    RawImage::new(h, w, data).expect("shift preserves dimensions")
}

/// Centered box filter of side `k`, truncated at the borders.
fn box_blur(vals: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let lo = (k - 1) / 2;
    let hi = k / 2;
    let mut out = vec![0.0; vals.len()];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(lo), (y + hi).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(lo), (x + hi).min(w - 1));
            let n = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            for ch in 0..CHANNELS {
                let mut sum = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        sum += vals[(yy * w + xx) * CHANNELS + ch];
                    }
                }
                out[(y * w + x) * CHANNELS + ch] = sum / n;
            }
        }
    }
    out
}

/// Flips about `flip_fraction` of the non-ignore pixels to a different class.
/// The pixels flipped at a given fraction are a subset of those flipped at
/// any larger fraction, and each gets the same replacement class. A map with
/// a single class cannot be flipped and is returned unchanged.
pub fn perturb_labels(gt: &LabelMap, flip_fraction: f64, seed: u64) -> Result<LabelMap, SynthError> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(SynthError::FlipFraction(flip_fraction));
    }
    let k = gt.class_count() as u64;
    if flip_fraction == 0.0 || k < 2 {
        return Ok(gt.clone());
    }
    let data = gt
        .data()
        .iter()
        .enumerate()
        .map(|(p, &id)| {
            if id == IGNORE_LABEL || uniform(seed, &[TAG_FLIP, p as u64]) >= flip_fraction {
                return id;
            }
            let skip = 1 + hash_keys(seed, &[TAG_FLIP_CLASS, p as u64]) % (k - 1);
            ((u64::from(id) + skip) % k) as u8
        })
        .collect();
    Ok(LabelMap::new(gt.height(), gt.width(), gt.class_count(), data).expect("flipped IDs stay in range"))
}

/// Writes `images/NNNN.ppm` and, for labelled corpora, `labels/NNNN.pgm`
/// under `dir`. Returns the image and label directories.
pub fn write_corpus(dir: impl AsRef<Path>, corpus: &SynthCorpus) -> Result<(PathBuf, Option<PathBuf>), ImageError> {
    let dir = dir.as_ref();
    let create = |d: &Path| {
        std::fs::create_dir_all(d).map_err(|source| ImageError::Io {
            path: d.to_path_buf(),
            source,
        })
    };
    let image_dir = dir.join("images");
    create(&image_dir)?;
    for (i, img) in corpus.images.iter().enumerate() {
        imageio::write_ppm(image_dir.join(format!("{i:04}.ppm")), &imageio::denormalize(img))?;
    }
    let label_dir = match &corpus.labels {
        Some(labels) => {
            let label_dir = dir.join("labels");
            create(&label_dir)?;
            for (i, map) in labels.iter().enumerate() {
                imageio::write_labelmap_pgm(label_dir.join(format!("{i:04}.pgm")), map)?;
            }
            Some(label_dir)
        }
        None => None,
    };
    Ok((image_dir, label_dir))
}
