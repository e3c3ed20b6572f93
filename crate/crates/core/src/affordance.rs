//! Affordance probability maps, the Gaussian-bump annotator and the raster
//! file formats (`AFM1` affordance rasters, `DPT1` depth rasters, 16-bit PGM).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const AFM_MAGIC: &[u8; 4] = b"AFM1";
const DPT_MAGIC: &[u8; 4] = b"DPT1";

/// Dense per-pixel affordance probability grid, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

/// A 2D human-object interaction point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionPoint {
    pub x: f64,
    pub y: f64,
}

impl InteractionPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl AffordanceMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("map dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::validation(format!(
                "expected {} values, got {}",
                width * height,
                values.len()
            )));
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::OutOfRange(format!("affordance value {v}")));
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Value at column `x`, row `y`.
    pub fn value(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Argmax pixel as `(col, row)`; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }
}

/// Row-major depth raster in meters; 0 encodes "no measurement".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depth: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("depth dimensions must be positive"));
        }
        if depth.len() != width * height {
            return Err(Error::validation(format!(
                "expected {} depth values, got {}",
                width * height,
                depth.len()
            )));
        }
        for &d in &depth {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::OutOfRange(format!("depth value {d}")));
            }
        }
        Ok(Self {
            width,
            height,
            depth,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    /// Depth in meters at column `x`, row `y`; 0 means invalid.
    pub fn value(&self, x: usize, y: usize) -> f32 {
        self.depth[y * self.width + x]
    }
}

/// Builds an affordance map by dropping a Gaussian bump on every interaction
/// point; overlapping bumps combine by pointwise max so each annotated point
/// keeps probability 1.
pub fn gaussian_bump(
    points: &[InteractionPoint],
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<AffordanceMap> {
    if points.is_empty() {
        return Err(Error::validation("gaussian_bump: empty point list"));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::validation(format!(
            "gaussian_bump: sigma must be positive, got {sigma}"
        )));
    }
    for p in points {
        if !(0.0..width as f64).contains(&p.x) || !(0.0..height as f64).contains(&p.y) {
            return Err(Error::validation(format!(
                "gaussian_bump: point ({}, {}) outside {width}x{height} image",
                p.x, p.y
            )));
        }
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = vec![0.0f32; width * height];
    for j in 0..height {
        for i in 0..width {
            let mut best = 0.0f64;
            for p in points {
                let dx = i as f64 - p.x;
                let dy = j as f64 - p.y;
                let v = (-(dx * dx + dy * dy) * inv).exp();
                if v > best {
                    best = v;
                }
            }
            values[j * width + i] = best as f32;
        }
    }
    AffordanceMap::new(width, height, values)
}

fn write_raster(magic: &[u8; 4], width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_raster(magic: &[u8; 4], data: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if data.len() < 4 || &data[..4] != magic {
        return Err(Error::BadMagic);
    }
    if data.len() < 12 {
        return Err(Error::Truncated);
    }
    let width = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse("raster dimensions overflow"))?;
    let payload = &data[12..];
    if payload.len() < n * 4 {
        return Err(Error::Truncated);
    }
    let values = payload[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

/// Serializes an affordance map into the `AFM1` byte layout.
pub fn write_afm<W: Write>(map: &AffordanceMap, mut dest: W) -> Result<()> {
    dest.write_all(&write_raster(AFM_MAGIC, map.width, map.height, &map.values))?;
    Ok(())
}

pub fn read_afm<R: Read>(mut source: R) -> Result<AffordanceMap> {
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    let (width, height, values) = read_raster(AFM_MAGIC, &data)?;
    AffordanceMap::new(width, height, values)
}

pub fn write_afm_file(map: &AffordanceMap, path: impl AsRef<Path>) -> Result<()> {
    write_afm(map, std::fs::File::create(path)?)
}

pub fn read_afm_file(path: impl AsRef<Path>) -> Result<AffordanceMap> {
    read_afm(std::fs::File::open(path)?)
}

/// Serializes a depth image into the `DPT1` byte layout (meters).
pub fn write_dpt<W: Write>(depth: &DepthImage, mut dest: W) -> Result<()> {
    dest.write_all(&write_raster(
        DPT_MAGIC,
        depth.width,
        depth.height,
        &depth.depth,
    ))?;
    Ok(())
}

pub fn write_dpt_file(depth: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    write_dpt(depth, std::fs::File::create(path)?)
}

fn read_dpt_bytes(data: &[u8]) -> Result<DepthImage> {
    let (width, height, values) = read_raster(DPT_MAGIC, data)?;
    DepthImage::new(width, height, values)
}

fn read_pgm_bytes(data: &[u8]) -> Result<DepthImage> {
    // binary PGM: "P5" <w> <h> <maxval> then big-endian 16-bit samples
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(Error::BadMagic);
    }
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::parse("PGM: missing header field"));
        }
        *field = std::str::from_utf8(&data[start..pos])
            .map_err(|_| Error::parse("PGM: non-utf8 header"))?
            .parse()
            .map_err(|_| Error::parse("PGM: bad header number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 65535 {
        return Err(Error::parse(format!(
            "PGM: max-val must be 65535, got {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::parse("PGM: missing header terminator"));
    }
    pos += 1;
    let n = width * height;
    let payload = &data[pos..];
    if payload.len() < n * 2 {
        return Err(Error::Truncated);
    }
    let depth = payload[..n * 2]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 1000.0)
        .collect();
    DepthImage::new(width, height, depth)
}

/// Reads a depth image from either a `DPT1` raster (meters) or a binary
/// 16-bit PGM (millimeters).
pub fn read_depth<R: Read>(mut source: R) -> Result<DepthImage> {
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    if data.starts_with(DPT_MAGIC) {
        read_dpt_bytes(&data)
    } else if data.starts_with(b"P5") {
        read_pgm_bytes(&data)
    } else {
        Err(Error::BadMagic)
    }
}

pub fn read_depth_file(path: impl AsRef<Path>) -> Result<DepthImage> {
    read_depth(std::fs::File::open(path)?)
}
