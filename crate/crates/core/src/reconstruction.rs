//! Deterministic image reconstructors.
//!
//! A reconstructor maps an image to an approximation of itself; how well it
//! does so on a given corpus is the quality signal the observer tracks. The
//! surrogates here work on denormalized `[0, 255]` intensities and
//! renormalize their output.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing;
use crate::imageio::{to_intensity, Image, CHANNELS};
use crate::metrics::{psnr, MetricsError, PsnrConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructorError {
    #[error("quantize needs at least 2 levels, got {0}")]
    TooFewLevels(u32),
    #[error("blur factor must be 2, 4 or 8, got {0}")]
    BadBlurFactor(u32),
    #[error("noise amplitude must be in (0, 2], got {0}")]
    BadAmplitude(f64),
    #[error("cannot parse reconstructor {0:?}: {1}")]
    Parse(String, String),
}

/// Image-in, image-out transform whose output quality is domain sensitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
#[serde(try_from = "RawReconstructor")]
pub enum Reconstructor {
    Identity,
    /// Snap to the nearest of `levels` evenly spaced intensities in `[0, 255]`.
    Quantize {
        levels: u32,
    },
    /// Replace each `factor`x`factor` block by its mean.
    BlurResample {
        factor: u32,
    },
    /// Add position-hashed uniform noise in `[-amplitude, amplitude]`.
    PseudoNoise {
        amplitude: f64,
        seed: u64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
enum RawReconstructor {
    Identity,
    Quantize { levels: u32 },
    BlurResample { factor: u32 },
    PseudoNoise { amplitude: f64, seed: u64 },
}

impl TryFrom<RawReconstructor> for Reconstructor {
    type Error = ReconstructorError;

    fn try_from(raw: RawReconstructor) -> Result<Self, Self::Error> {
        match raw {
            RawReconstructor::Identity => Ok(Self::Identity),
            RawReconstructor::Quantize { levels } => Self::quantize(levels),
            RawReconstructor::BlurResample { factor } => Self::blur_resample(factor),
            RawReconstructor::PseudoNoise { amplitude, seed } => Self::pseudo_noise(amplitude, seed),
        }
    }
}

impl Reconstructor {
    pub fn quantize(levels: u32) -> Result<Self, ReconstructorError> {
        if levels < 2 {
            return Err(ReconstructorError::TooFewLevels(levels));
        }
        Ok(Self::Quantize { levels })
    }

    pub fn blur_resample(factor: u32) -> Result<Self, ReconstructorError> {
        if !matches!(factor, 2 | 4 | 8) {
            return Err(ReconstructorError::BadBlurFactor(factor));
        }
        Ok(Self::BlurResample { factor })
    }

    pub fn pseudo_noise(amplitude: f64, seed: u64) -> Result<Self, ReconstructorError> {
        if !(amplitude > 0.0 && amplitude <= 2.0) {
            return Err(ReconstructorError::BadAmplitude(amplitude));
        }
        Ok(Self::PseudoNoise { amplitude, seed })
    }

    pub fn reconstruct(&self, img: &Image) -> Image {
        match *self {
            Self::Identity => img.clone(),
            Self::Quantize { levels } => quantize(img, levels),
            Self::BlurResample { factor } => blur_resample(img, factor as usize),
            Self::PseudoNoise { amplitude, seed } => pseudo_noise(img, amplitude, seed),
        }
    }
}

/// Maps an intensity to the normalized range using the same arithmetic as
/// 8-bit normalization, so integer intensities reproduce loaded images
/// bit for bit.
fn renormalize(v: f64) -> f32 {
    (2.0 * v.clamp(0.0, 255.0) / 255.0 - 1.0) as f32
}

fn map_values(img: &Image, f: impl Fn(usize, f32) -> f32) -> Image {
    let data = img.data().iter().enumerate().map(|(i, &v)| f(i, v)).collect();
    Image::from_clamped(img.height(), img.width(), data)
}

fn quantize(img: &Image, levels: u32) -> Image {
    let step = 255.0 / f64::from(levels - 1);
    map_values(img, |_, v| {
        let level = (to_intensity(v) / step).round();
        renormalize(level * step)
    })
}

fn blur_resample(img: &Image, factor: usize) -> Image {
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let mut out = vec![0f32; src.len()];
    for by in (0..h).step_by(factor) {
        let y_end = (by + factor).min(h);
        for bx in (0..w).step_by(factor) {
            let x_end = (bx + factor).min(w);
            let n = ((y_end - by) * (x_end - bx)) as f64;
            for c in 0..CHANNELS {
                let mut sum = 0.0;
                for y in by..y_end {
                    for x in bx..x_end {
                        sum += to_intensity(src[(y * w + x) * CHANNELS + c]);
                    }
                }
                let mean = renormalize(sum / n);
                for y in by..y_end {
                    for x in bx..x_end {
                        out[(y * w + x) * CHANNELS + c] = mean;
                    }
                }
            }
        }
    }
    Image::from_clamped(h, w, out)
}

fn pseudo_noise(img: &Image, amplitude: f64, seed: u64) -> Image {
    map_values(img, |i, v| {
        let (pixel, channel) = ((i / CHANNELS) as u64, (i % CHANNELS) as u64);
        let offset = amplitude * (2.0 * hashing::uniform(seed, &[pixel, channel]) - 1.0);
        (f64::from(v) + offset).clamp(-1.0, 1.0) as f32
    })
}

/// PSNR of every image against its reconstruction, in input order.
pub fn score_corpus(r: &Reconstructor, images: &[Image], cfg: &PsnrConfig) -> Result<Vec<f64>, MetricsError> {
    images
        .par_iter()
        .map(|img| psnr(img, &r.reconstruct(img), cfg))
        .collect()
}

impl fmt::Display for Reconstructor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Quantize { levels } => write!(f, "quantize:{levels}"),
            Self::BlurResample { factor } => write!(f, "blur_resample:{factor}"),
            Self::PseudoNoise { amplitude, seed } => write!(f, "pseudo_noise:{amplitude}:{seed}"),
        }
    }
}

/// Parses `identity`, `quantize:K`, `blur_resample:F` (or `blur:F`) and
/// `pseudo_noise:A[:SEED]` (or `noise:...`).
impl FromStr for Reconstructor {
    type Err = ReconstructorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |msg: &str| ReconstructorError::Parse(s.to_string(), msg.to_string());
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let params: Vec<&str> = parts.collect();
        let int = |p: Option<&&str>, what: &str| -> Result<u64, ReconstructorError> {
            p.ok_or_else(|| parse_err(&format!("missing {what}")))?
                .parse()
                .map_err(|_| parse_err(&format!("bad {what}")))
        };
        let arity = |n: std::ops::RangeInclusive<usize>| {
            if n.contains(&params.len()) {
                Ok(())
            } else {
                Err(parse_err("wrong number of parameters"))
            }
        };
        match kind {
            "identity" => {
                arity(0..=0)?;
                Ok(Self::Identity)
            }
            "quantize" => {
                arity(1..=1)?;
                let levels = int(params.first(), "levels")?;
                Self::quantize(u32::try_from(levels).map_err(|_| parse_err("levels too large"))?)
            }
            "blur" | "blur_resample" => {
                arity(1..=1)?;
                let factor = int(params.first(), "factor")?;
                Self::blur_resample(u32::try_from(factor).map_err(|_| parse_err("factor too large"))?)
            }
            "noise" | "pseudo_noise" => {
                arity(1..=2)?;
                let amplitude: f64 = params[0].parse().map_err(|_| parse_err("bad amplitude"))?;
                let seed = if params.len() == 2 {
                    int(params.get(1), "seed")?
                } else {
                    0
                };
                Self::pseudo_noise(amplitude, seed)
            }
            _ => Err(parse_err("unknown kind")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{denormalize, normalize, normalize_value, RawImage};

    fn gray(h: usize, w: usize, vals: &[u8]) -> Image {
        normalize(&RawImage::from_gray(h, w, vals).unwrap())
    }

    fn ramp(h: usize, w: usize) -> Image {
        let vals: Vec<u8> = (0..h * w * 3).map(|i| ((i * 37) % 256) as u8).collect();
        normalize(&RawImage::new(h, w, vals).unwrap())
    }

    #[test]
    fn identity_is_bit_identical() {
        let img = ramp(5, 7);
        assert_eq!(Reconstructor::Identity.reconstruct(&img), img);
    }

    #[test]
    fn quantize_two_levels() {
        let out = Reconstructor::quantize(2).unwrap().reconstruct(&gray(1, 1, &[100]));
        assert_eq!(denormalize(&out).data(), &[0, 0, 0]);
        let out = Reconstructor::quantize(2).unwrap().reconstruct(&gray(1, 1, &[200]));
        assert_eq!(denormalize(&out).data(), &[255, 255, 255]);
    }

    #[test]
    fn quantize_256_is_identity_on_8bit_images() {
        let levels: Vec<u8> = (0..=255).collect();
        let img = gray(16, 16, &levels);
        assert_eq!(Reconstructor::quantize(256).unwrap().reconstruct(&img), img);
    }

    #[test]
    fn blur_two_by_two_block_mean() {
        let img = gray(2, 2, &[0, 255, 0, 255]);
        let out = Reconstructor::blur_resample(2).unwrap().reconstruct(&img);
        for &v in out.data() {
            assert_eq!(to_intensity(v), 127.5);
        }
    }

    #[test]
    fn blur_truncates_edge_blocks() {
        // 3x1: first block holds columns 0..2, second only column 2
        let img = gray(1, 3, &[10, 30, 200]);
        let out = Reconstructor::blur_resample(2).unwrap().reconstruct(&img);
        let raw = denormalize(&out);
        assert_eq!(raw.data(), &[20, 20, 20, 20, 20, 20, 200, 200, 200]);
    }

    #[test]
    fn pseudo_noise_is_bounded_and_reproducible() {
        let img = ramp(8, 8);
        let r = Reconstructor::pseudo_noise(0.1, 77).unwrap();
        let a = r.reconstruct(&img);
        let b = r.reconstruct(&img);
        assert_eq!(a, b);
        for (&x, &y) in img.data().iter().zip(a.data()) {
            assert!((f64::from(y) - f64::from(x)).abs() <= 0.1 + 1e-6);
            assert!((-1.0..=1.0).contains(&y));
        }
        let other = Reconstructor::pseudo_noise(0.1, 78).unwrap().reconstruct(&img);
        assert_ne!(a, other);
    }

    #[test]
    fn shapes_are_preserved() {
        let img = ramp(9, 13);
        for r in [
            Reconstructor::Identity,
            Reconstructor::quantize(5).unwrap(),
            Reconstructor::blur_resample(4).unwrap(),
            Reconstructor::blur_resample(8).unwrap(),
            Reconstructor::pseudo_noise(2.0, 1).unwrap(),
        ] {
            let out = r.reconstruct(&img);
            assert!(out.same_shape(&img), "{r}");
            assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn validation() {
        assert_eq!(Reconstructor::quantize(1), Err(ReconstructorError::TooFewLevels(1)));
        assert_eq!(
            Reconstructor::blur_resample(3),
            Err(ReconstructorError::BadBlurFactor(3))
        );
        assert!(Reconstructor::pseudo_noise(0.0, 1).is_err());
        assert!(Reconstructor::pseudo_noise(2.5, 1).is_err());
        assert!(Reconstructor::pseudo_noise(f64::NAN, 1).is_err());
    }

    #[test]
    fn parse_and_display() {
        for s in ["identity", "quantize:8", "blur_resample:4", "pseudo_noise:0.25:9"] {
            let r: Reconstructor = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert_eq!(
            "blur:2".parse::<Reconstructor>().unwrap(),
            Reconstructor::BlurResample { factor: 2 }
        );
        assert_eq!(
            "noise:0.5".parse::<Reconstructor>().unwrap(),
            Reconstructor::PseudoNoise {
                amplitude: 0.5,
                seed: 0
            }
        );
        for bad in [
            "",
            "quantize",
            "quantize:x",
            "quantize:1",
            "blur:3",
            "identity:1",
            "warp:2",
        ] {
            assert!(bad.parse::<Reconstructor>().is_err(), "{bad}");
        }
    }

    #[test]
    fn serde_shape_and_validation() {
        let json = serde_json::to_string(&Reconstructor::Quantize { levels: 8 }).unwrap();
        assert_eq!(json, r#"{"kind":"quantize","params":{"levels":8}}"#);
        let id = serde_json::to_string(&Reconstructor::Identity).unwrap();
        assert_eq!(id, r#"{"kind":"identity"}"#);
        let back: Reconstructor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Reconstructor::Quantize { levels: 8 });
        assert!(serde_json::from_str::<Reconstructor>(r#"{"kind":"quantize","params":{"levels":1}}"#).is_err());
    }

    #[test]
    fn score_corpus_matches_direct_psnr() {
        let cfg = PsnrConfig::default();
        let images: Vec<Image> = (0..10)
            .map(|k| {
                let vals: Vec<u8> = (0..8 * 8 * 3u64)
                    .map(|i| (hashing::uniform(k, &[i]) * 256.0) as u8)
                    .collect();
                normalize(&RawImage::new(8, 8, vals).unwrap())
            })
            .collect();
        let r = Reconstructor::quantize(4).unwrap();
        let scores = score_corpus(&r, &images, &cfg).unwrap();
        for (img, s) in images.iter().zip(&scores) {
            assert_eq!(*s, psnr(img, &r.reconstruct(img), &cfg).unwrap());
        }
        let single = score_corpus(&r, &images[..1], &cfg).unwrap();
        assert_eq!(single, vec![scores[0]]);
        let ident = score_corpus(&Reconstructor::Identity, &images, &cfg).unwrap();
        assert!(ident.iter().all(|&s| s == cfg.cap_db));
    }

    #[test]
    fn renormalize_matches_8bit_normalization() {
        for v in 0..=255u8 {
            assert_eq!(renormalize(f64::from(v)), normalize_value(v));
        }
    }
}
