//! Raster loading and pixel normalization.
//!
//! Images are read from 8-bit PNG or binary PNM (P6, and P5 for grayscale)
//! and always carry three channels; single-channel inputs are replicated.
//! Label maps are single-channel rasters whose values are zero-based class
//! IDs, with [`IGNORE_LABEL`] marking pixels excluded from evaluation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Channel count of every image handled by the crate.
pub const CHANNELS: usize = 3;

/// Raster value that marks an ignored pixel in a label map.
pub const IGNORE_LABEL: u8 = 255;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    Corrupt(String),
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("invalid dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("normalized value {0} outside [-1, 1]")]
    OutOfRange(f32),
    #[error("class id {id} at pixel {index} is outside 0..{class_count}")]
    InvalidClass { id: u8, index: usize, class_count: u8 },
    #[error("class count must be in 1..=254, got {0}")]
    InvalidClassCount(usize),
}

fn check_dims(height: usize, width: usize, per_pixel: usize, len: usize) -> Result<(), ImageError> {
    if height == 0 || width == 0 {
        return Err(ImageError::InvalidDimensions { height, width });
    }
    let expected = height * width * per_pixel;
    if len != expected {
        return Err(ImageError::BufferSize { expected, got: len });
    }
    Ok(())
}

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(height, width, CHANNELS, data.len())?;
        Ok(Self { height, width, data })
    }

    /// Builds an RGB raster from a single-channel buffer by replication.
    pub fn from_gray(height: usize, width: usize, gray: &[u8]) -> Result<Self, ImageError> {
        check_dims(height, width, 1, gray.len())?;
        let data = gray.iter().flat_map(|&v| [v; CHANNELS]).collect();
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Normalized RGB image with every value in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        check_dims(height, width, CHANNELS, data.len())?;
        if let Some(&bad) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange(bad));
        }
        Ok(Self { height, width, data })
    }

    /// Constructs an image from values the caller has already clamped.
    pub(crate) fn from_clamped(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * CHANNELS);
        debug_assert!(data.iter().all(|v| (-1.0..=1.0).contains(v)));
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Maps an 8-bit intensity to `[-1, 1]` as `2v/255 - 1`.
#[inline]
pub fn normalize_value(v: u8) -> f32 {
    (2.0 * f64::from(v) / 255.0 - 1.0) as f32
}

/// Continuous inverse of [`normalize_value`], without rounding.
#[inline]
pub fn to_intensity(v: f32) -> f64 {
    (f64::from(v) + 1.0) * 127.5
}

/// Maps an intensity in `[0, 255]` back to the normalized range, clamping.
#[inline]
pub fn from_intensity(v: f64) -> f32 {
    (v / 127.5 - 1.0).clamp(-1.0, 1.0) as f32
}

/// Rounds a normalized value to the nearest 8-bit level.
#[inline]
pub fn denormalize_value(v: f32) -> u8 {
    to_intensity(v).round().clamp(0.0, 255.0) as u8
}

pub fn normalize(raw: &RawImage) -> Image {
    let data = raw.data.iter().map(|&v| normalize_value(v)).collect();
    Image::from_clamped(raw.height, raw.width, data)
}

pub fn denormalize(img: &Image) -> RawImage {
    let data = img.data.iter().map(|&v| denormalize_value(v)).collect();
    RawImage {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Per-pixel segmentation classes; zero-based IDs below `class_count`, or
/// [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    class_count: u8,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, class_count: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if class_count == 0 || class_count >= usize::from(IGNORE_LABEL) {
            return Err(ImageError::InvalidClassCount(class_count));
        }
        check_dims(height, width, 1, data.len())?;
        let class_count = class_count as u8;
        if let Some((index, &id)) = data
            .iter()
            .enumerate()
            .find(|(_, &id)| id != IGNORE_LABEL && id >= class_count)
        {
            return Err(ImageError::InvalidClass { id, index, class_count });
        }
        Ok(Self {
            height,
            width,
            class_count,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_count(&self) -> usize {
        usize::from(self.class_count)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Single- or three-channel 8-bit raster as decoded from disk.
struct Decoded {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn decode(bytes: &[u8]) -> Result<Decoded, ImageError> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "expected PNG or binary PNM (P5/P6)".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Decoded, ImageError> {
    use image::DynamicImage;

    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Corrupt(e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, data) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => return Err(ImageError::UnsupportedChannels(2)),
        DynamicImage::ImageRgba8(_) => return Err(ImageError::UnsupportedChannels(4)),
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "PNG color type {:?}",
                other.color()
            )))
        }
    };
    Ok(Decoded {
        height,
        width,
        channels,
        data,
    })
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmHeader<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::Corrupt(format!("missing {what} in PNM header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Corrupt(format!("bad {what} in PNM header")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Decoded, ImageError> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut hdr = PnmHeader { bytes, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "PNM maxval {maxval} (only 8-bit 255 supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions { height, width });
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(ImageError::Corrupt("missing separator after PNM header".into())),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImageError::Corrupt("PNM dimensions overflow".into()))?;
    let payload = &bytes[hdr.pos..];
    if payload.len() < len {
        return Err(ImageError::Corrupt(format!(
            "truncated PNM payload: {} of {len} bytes",
            payload.len()
        )));
    }
    Ok(Decoded {
        height,
        width,
        channels,
        data: payload[..len].to_vec(),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, ImageError> {
    fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Decodes an in-memory PNG or PNM into an RGB raster.
pub fn decode_image(bytes: &[u8]) -> Result<RawImage, ImageError> {
    let d = decode(bytes)?;
    match d.channels {
        1 => RawImage::from_gray(d.height, d.width, &d.data),
        3 => RawImage::new(d.height, d.width, d.data),
        c => Err(ImageError::UnsupportedChannels(c)),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage, ImageError> {
    decode_image(&read_file(path.as_ref())?)
}

/// Decodes an in-memory single-channel raster as a label map.
pub fn decode_labelmap(bytes: &[u8], class_count: usize) -> Result<LabelMap, ImageError> {
    let d = decode(bytes)?;
    if d.channels != 1 {
        return Err(ImageError::UnsupportedChannels(d.channels));
    }
    LabelMap::new(d.height, d.width, class_count, d.data)
}

pub fn load_labelmap(path: impl AsRef<Path>, class_count: usize) -> Result<LabelMap, ImageError> {
    decode_labelmap(&read_file(path.as_ref())?, class_count)
}

fn write_pnm(path: &Path, magic: &str, height: usize, width: usize, data: &[u8]) -> Result<(), ImageError> {
    let io_err = |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write!(w, "{magic}\n{width} {height}\n255\n").map_err(io_err)?;
    w.write_all(data).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Writes a binary PPM (P6).
pub fn write_ppm(path: impl AsRef<Path>, img: &RawImage) -> Result<(), ImageError> {
    write_pnm(path.as_ref(), "P6", img.height, img.width, &img.data)
}

/// Writes a label map as a binary PGM (P5).
pub fn write_labelmap_pgm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<(), ImageError> {
    write_pnm(path.as_ref(), "P5", labels.height, labels.width, &labels.data)
}

const RASTER_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm"];

/// Lists raster files directly inside `dir`, sorted by file name.
pub fn list_rasters(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ImageError> {
    let dir = dir.as_ref();
    let io_err = |source| ImageError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_raster = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_raster && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Result of loading every raster in a directory. Individual failures do not
/// abort the load.
#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub images: Vec<(PathBuf, Image)>,
    pub failures: Vec<(PathBuf, ImageError)>,
}

impl CorpusLoad {
    pub fn images(&self) -> Vec<Image> {
        self.images.iter().map(|(_, img)| img.clone()).collect()
    }
}

/// Loads and normalizes every raster in `dir` in file-name order.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<CorpusLoad, ImageError> {
    let mut out = CorpusLoad::default();
    for path in list_rasters(dir)? {
        match load_image(&path) {
            Ok(raw) => out.images.push((path, normalize(&raw))),
            Err(e) => out.failures.push((path, e)),
        }
    }
    Ok(out)
}
