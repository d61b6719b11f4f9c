//! Datacube model, the `.hyrs` binary container and PGM ingestion/export.
//!
//! Container layout (all fields little-endian):
//!
//! | field         | type                          |
//! |---------------|-------------------------------|
//! | magic         | `b"HYRS"`                     |
//! | version       | `u8` = 1                      |
//! | width         | `u32`                         |
//! | height        | `u32`                         |
//! | channels `C`  | `u32`                         |
//! | pixel size    | `f64` (micrometres)           |
//! | labels        | `C × f64`                     |
//! | intensities   | `C × height × width × f32`    |
//!
//! Intensities are channel-major and row-major within a channel.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HYRS";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 4 + 8;

/// A single 2D intensity image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ChannelImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width} image",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at ({}, {})",
                data[pos],
                pos / width.max(1),
                pos % width.max(1)
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds an image from `f(row, col)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                assert!(v.is_finite(), "non-finite value at ({r}, {c})");
                data.push(v);
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Applies `f` to every pixel. Panics if `f` produces a non-finite value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite values");
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Copies the `height × width` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "window {height}x{width} at ({row}, {col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Ordered stack of equally sized channels with a physical pixel size and
/// strictly increasing channel labels (m/z values).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    channels: Vec<ChannelImage>,
    pixel_size_um: f64,
    labels: Vec<f64>,
}

impl SpectralCube {
    pub fn new(channels: Vec<ChannelImage>, pixel_size_um: f64, labels: Vec<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Validation("cube has no channels".into()));
        }
        let dims = channels[0].dims();
        if let Some((i, ch)) = channels.iter().enumerate().find(|(_, c)| c.dims() != dims) {
            return Err(Error::Validation(format!(
                "channel {i} is {}x{}, expected {}x{}",
                ch.height, ch.width, dims.0, dims.1
            )));
        }
        if !(pixel_size_um.is_finite() && pixel_size_um > 0.0) {
            return Err(Error::Validation(format!(
                "pixel size must be positive, got {pixel_size_um}"
            )));
        }
        if labels.len() != channels.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} channels",
                labels.len(),
                channels.len()
            )));
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Validation("labels must be finite".into()));
        }
        if let Some(w) = labels.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "labels not strictly increasing at index {}: {} then {}",
                w + 1,
                labels[w],
                labels[w + 1]
            )));
        }
        Ok(Self {
            channels,
            pixel_size_um,
            labels,
        })
    }

    pub fn channels(&self) -> &[ChannelImage] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> Result<&ChannelImage> {
        self.channels.get(index).ok_or(Error::OutOfRange {
            index,
            len: self.channels.len(),
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }

    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn pixel_size_um(&self) -> f64 {
        self.pixel_size_um
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn into_parts(self) -> (Vec<ChannelImage>, f64, Vec<f64>) {
        (self.channels, self.pixel_size_um, self.labels)
    }

    /// Applies `f` to every channel, keeping labels and pixel size.
    pub fn map_channels(
        &self,
        mut f: impl FnMut(usize, &ChannelImage) -> Result<ChannelImage>,
    ) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels, self.pixel_size_um, self.labels.clone())
    }
}

/// Serializes a cube into the container layout.
pub fn encode_cube(cube: &SpectralCube) -> Vec<u8> {
    let c = cube.channel_count();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * c + 4 * c * cube.height() * cube.width());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(cube.width() as u32).to_le_bytes());
    out.extend_from_slice(&(cube.height() as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&cube.pixel_size_um.to_le_bytes());
    for l in &cube.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for ch in &cube.channels {
        for &v in &ch.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<SpectralCube> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::Format("missing HYRS magic bytes".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!(
            "header truncated: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported container version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let width = u32_at(5);
    let height = u32_at(9);
    let count = u32_at(13);
    let pixel_size = f64_at(17);

    let plane = width
        .checked_mul(height)
        .ok_or_else(|| Error::Corruption("dimensions overflow".into()))?;
    let expected = count
        .checked_mul(8)
        .and_then(|l| count.checked_mul(plane)?.checked_mul(4)?.checked_add(l))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Corruption("declared payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::Corruption(format!(
            "payload truncated: {} of {expected} bytes for {count} channels of {height}x{width}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }

    let labels: Vec<f64> = (0..count).map(|i| f64_at(HEADER_LEN + 8 * i)).collect();
    let payload = &bytes[HEADER_LEN + 8 * count..];
    let channels = payload
        .chunks_exact(4 * plane.max(1))
        .take(count)
        .map(|chunk| {
            let data = chunk[..4 * plane]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            ChannelImage::new(height, width, data)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralCube::new(channels, pixel_size, labels)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

pub fn write_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cube(cube)).map_err(|e| Error::io(path, e))
}

/// Inputs for assembling a cube from per-channel grayscale files.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeManifest {
    pub pixel_size_um: f64,
    /// Where the labels came from, kept for provenance only.
    pub label_source: Option<PathBuf>,
    pub labels: Vec<f64>,
    pub files: Vec<PathBuf>,
}

impl CubeManifest {
    pub fn new(pixel_size_um: f64, labels: Vec<f64>, files: Vec<PathBuf>) -> Result<Self> {
        if labels.len() != files.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} files",
                labels.len(),
                files.len()
            )));
        }
        Ok(Self {
            pixel_size_um,
            label_source: None,
            labels,
            files,
        })
    }

    /// Reads labels from a text file: one real per line or comma separated.
    pub fn with_label_file(
        pixel_size_um: f64,
        label_path: impl AsRef<Path>,
        files: Vec<PathBuf>,
    ) -> Result<Self> {
        let label_path = label_path.as_ref();
        let text = fs::read_to_string(label_path).map_err(|e| Error::io(label_path, e))?;
        let labels = parse_labels(&text)?;
        let mut m = Self::new(pixel_size_um, labels, files)?;
        m.label_source = Some(label_path.to_path_buf());
        Ok(m)
    }
}

pub fn parse_labels(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad label value {t:?}")))
        })
        .collect()
}

pub fn import_channels(manifest: &CubeManifest) -> Result<SpectralCube> {
    if manifest.files.len() != manifest.labels.len() {
        return Err(Error::Validation(format!(
            "{} labels for {} files",
            manifest.labels.len(),
            manifest.files.len()
        )));
    }
    let mut channels: Vec<ChannelImage> = Vec::with_capacity(manifest.files.len());
    for path in &manifest.files {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = decode_pgm(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if let Some(first) = channels.first() {
            if first.dims() != img.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    img.height,
                    img.width,
                    first.height,
                    first.width
                )));
            }
        }
        channels.push(img);
    }
    SpectralCube::new(channels, manifest.pixel_size_um, manifest.labels.clone())
}

/// Decodes a binary (`P5`) PGM. 8-bit samples are divided by 255, 16-bit
/// (big-endian) samples by 65535.
pub fn decode_pgm(bytes: &[u8]) -> Result<ChannelImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("only binary P5 PGM is supported".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let need = width * height * sample_bytes;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Corruption(format!(
            "PGM raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    let data = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect()
    } else {
        raster[..need].iter().map(|&b| b as f64 / 255.0).collect()
    };
    ChannelImage::new(height, width, data)
}

/// Encodes a 16-bit binary PGM with `round(v * 65535)`, clamped to the format range.
pub fn encode_pgm16(image: &ChannelImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width, image.height).into_bytes();
    for &v in &image.data {
        let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Long-form CSV of raw values: `row,col,value`.
pub fn encode_channel_csv(image: &ChannelImage) -> String {
    let mut s = String::from("row,col,value\n");
    for r in 0..image.height {
        for c in 0..image.width {
            s.push_str(&format!("{r},{c},{}\n", image.get(r, c)));
        }
    }
    s
}

/// Writes channel `index` as a 16-bit PGM, plus `<path>.csv` with the raw
/// reals when `with_csv` is set.
pub fn export_channel(
    cube: &SpectralCube,
    index: usize,
    path: impl AsRef<Path>,
    with_csv: bool,
) -> Result<()> {
    let path = path.as_ref();
    let ch = cube.channel(index)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm16(ch)).map_err(|e| Error::io(path, e))?;
    if with_csv {
        let csv_path = path.with_extension("csv");
        fs::write(&csv_path, encode_channel_csv(ch)).map_err(|e| Error::io(&csv_path, e))?;
    }
    Ok(())
}
