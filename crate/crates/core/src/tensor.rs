//! Rasters shared by every stage of the pipeline, and their file formats.
//!
//! Channel stacks travel as CST files: a 20-byte little-endian header
//! (`"CSTK"`, version `u16 = 1`, dtype `u8 = 1` for float32, reserved `u8 = 0`,
//! then height, width, channels as `u32`) followed by the float32 payload in
//! pixel-major order. Masks travel as binary (P5) PGM with maxval 255 and
//! scribbles as a JSON array of `{"x", "y", "label"}` objects.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CST_MAGIC: [u8; 4] = *b"CSTK";
pub const CST_VERSION: u16 = 1;
pub const CST_DTYPE_F32: u8 = 1;
pub const CST_HEADER_LEN: usize = 20;

/// Label carried by foreground seed points.
pub const FOREGROUND: u8 = 1;

/// Largest raster side accepted from files, guarding allocation on corrupt headers.
const MAX_SIDE: u64 = 1 << 16;

fn checked_len(height: u32, width: u32, channels: u32) -> Result<usize> {
    let (h, w, c) = (height as u64, width as u64, channels as u64);
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::InvalidShape(format!(
            "{height}x{width}x{channels} has an empty axis"
        )));
    }
    if h > MAX_SIDE || w > MAX_SIDE {
        return Err(Error::DimensionOverflow {
            height: h,
            width: w,
        });
    }
    h.checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(Error::DimensionOverflow {
            height: h,
            width: w,
        })
}

/// An H×W×C float raster: a hyperspectral cube, a feature stack or an RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    height: u32,
    width: u32,
    channels: u32,
    data: Vec<f32>,
}

impl ChannelStack {
    pub fn new(height: u32, width: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let len = checked_len(height, width, channels)?;
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "{height}x{width}x{channels} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a stack by evaluating `f(x, y, c)` for every element.
    pub fn from_fn(
        height: u32,
        width: u32,
        channels: u32,
        mut f: impl FnMut(u32, u32, u32) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(checked_len(height, width, channels)?);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Spectrum of the pixel at flat index `y * width + x`.
    pub fn spectrum(&self, pixel: usize) -> &[f32] {
        let c = self.channels as usize;
        &self.data[pixel * c..(pixel + 1) * c]
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        self.spectrum(y as usize * self.width as usize + x as usize)
    }

    pub fn spectra(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels as usize)
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn to_cst_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CST_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&CST_MAGIC);
        out.extend_from_slice(&CST_VERSION.to_le_bytes());
        out.push(CST_DTYPE_F32);
        out.push(0);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_cst_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CST_HEADER_LEN {
            return Err(Error::Truncated {
                expected: CST_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != CST_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CST_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes[6] != CST_DTYPE_F32 {
            return Err(Error::UnsupportedDtype(bytes[6]));
        }
        if bytes[7] != 0 {
            return Err(Error::ReservedByte(bytes[7]));
        }
        let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (height, width, channels) = (read_u32(8), read_u32(12), read_u32(16));
        let len = checked_len(height, width, channels)?;

        let payload = &bytes[CST_HEADER_LEN..];
        let expected = len * 4;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected: CST_HEADER_LEN + expected,
                actual: bytes.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes(payload.len() - expected));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(height, width, channels, data)
    }
}

pub fn read_channel_stack(path: impl AsRef<Path>) -> Result<ChannelStack> {
    ChannelStack::from_cst_bytes(&fs::read(path)?)
}

pub fn write_channel_stack(stack: &ChannelStack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, stack.to_cst_bytes())?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScribblePoint {
    pub x: u32,
    pub y: u32,
    pub label: u8,
}

impl ScribblePoint {
    pub fn foreground(x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            label: FOREGROUND,
        }
    }
}

/// User-drawn seed pixels bound to the raster they were drawn on.
#[derive(Clone, Debug, PartialEq)]
pub struct ScribbleSet {
    points: Vec<ScribblePoint>,
    height: u32,
    width: u32,
}

impl ScribbleSet {
    pub fn new(points: Vec<ScribblePoint>, height: u32, width: u32) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.x >= width || p.y >= height {
                return Err(Error::ScribbleOutOfBounds {
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
            if !seen.insert(*p) {
                return Err(Error::DuplicateScribble {
                    x: p.x,
                    y: p.y,
                    label: p.label,
                });
            }
        }
        Ok(Self {
            points,
            height,
            width,
        })
    }

    /// Foreground seeds at the given `(x, y)` positions.
    pub fn foreground(coords: &[(u32, u32)], height: u32, width: u32) -> Result<Self> {
        Self::new(
            coords
                .iter()
                .map(|&(x, y)| ScribblePoint::foreground(x, y))
                .collect(),
            height,
            width,
        )
    }

    pub fn points(&self) -> &[ScribblePoint] {
        &self.points
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Flat pixel indices of the foreground seeds, erroring when there are none.
    pub fn seed_indices(&self) -> Result<Vec<usize>> {
        let w = self.width as usize;
        let seeds: Vec<usize> = self
            .points
            .iter()
            .filter(|p| p.label == FOREGROUND)
            .map(|p| p.y as usize * w + p.x as usize)
            .collect();
        if seeds.is_empty() {
            return Err(Error::EmptySeeds);
        }
        Ok(seeds)
    }

    pub fn from_json(bytes: &[u8], height: u32, width: u32) -> Result<Self> {
        let points: Vec<ScribblePoint> = serde_json::from_slice(bytes)?;
        Self::new(points, height, width)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.points).expect("scribble points serialize")
    }
}

pub fn read_scribbles(path: impl AsRef<Path>, height: u32, width: u32) -> Result<ScribbleSet> {
    ScribbleSet::from_json(&fs::read(path)?, height, width)
}

pub fn write_scribbles(scribbles: &ScribbleSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scribbles.to_json())?;
    Ok(())
}

/// A non-negative per-pixel distance field, either raw or min-max normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    height: u32,
    width: u32,
    data: Vec<f32>,
    normalized: bool,
}

impl DistanceMap {
    pub fn new(height: u32, width: u32, data: Vec<f32>, normalized: bool) -> Result<Self> {
        let len = checked_len(height, width, 1)?;
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} map needs {len} values, got {}",
                data.len()
            )));
        }
        let upper = if normalized { 1.0 } else { f32::INFINITY };
        if let Some(index) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > upper)
        {
            return Err(Error::InvalidDistance { index });
        }
        Ok(Self {
            height,
            width,
            data,
            normalized,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Single-channel stack view, as written to CST files.
    pub fn to_stack(&self) -> ChannelStack {
        ChannelStack::new(self.height, self.width, 1, self.data.clone())
            .expect("distance values are finite")
    }

    /// Reads a raw map back from a single-channel stack.
    pub fn from_stack(stack: &ChannelStack) -> Result<Self> {
        if stack.channels() != 1 {
            return Err(Error::InvalidShape(format!(
                "distance map needs 1 channel, got {}",
                stack.channels()
            )));
        }
        Self::new(stack.height(), stack.width(), stack.data().to_vec(), false)
    }
}

/// Boolean raster for segmentations, ground truth and skeletons.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: u32, width: u32, data: Vec<bool>) -> Result<Self> {
        let len = checked_len(height, width, 1)?;
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} mask needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: u32, width: u32) -> Result<Self> {
        Self::new(height, width, vec![false; checked_len(height, width, 1)?])
    }

    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(checked_len(height, width, 1)?);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// `(x, y)` of set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = PgmCursor { bytes, pos: 0 };
        if cursor.token()? != b"P5" {
            return Err(Error::MalformedPgm("expected P5 magic".into()));
        }
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        if maxval != 255 {
            return Err(Error::MalformedPgm(format!(
                "maxval {maxval} unsupported, expected 255"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(Error::MalformedPgm("missing raster separator".into())),
        }
        if width == 0 || height == 0 {
            return Err(Error::MalformedPgm(format!(
                "empty raster {width}x{height}"
            )));
        }
        let len = checked_len(height, width, 1)?;
        let raster = &bytes[cursor.pos..];
        if raster.len() < len {
            return Err(Error::MalformedPgm(format!(
                "raster has {} bytes, expected {len}",
                raster.len()
            )));
        }
        Self::new(
            height,
            width,
            raster[..len].iter().map(|&v| v > 127).collect(),
        )
    }
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while !matches!(self.bytes.get(self.pos), None | Some(b'\n')) {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::MalformedPgm("unexpected end of header".into())),
            }
        }
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        let text = std::str::from_utf8(tok)
            .map_err(|_| Error::MalformedPgm(format!("non-ascii {what}")))?;
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::MalformedPgm(format!("bad {what} {text:?}")));
        }
        text.parse::<u64>()
            .ok()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| Error::MalformedPgm(format!("{what} {text} overflows")))
    }
}

pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<BinaryMask> {
    BinaryMask::from_pgm_bytes(&fs::read(path)?)
}

pub fn write_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mask.to_pgm_bytes())?;
    Ok(())
}
