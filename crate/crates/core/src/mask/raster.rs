use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("frame dimensions must be positive, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::Input(format!(
                "frame buffer holds {} bytes, {width}x{height} RGB needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Frame filled with a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self { width, height, pixels }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fill the rectangle `[x0, x1) × [y0, y1)`, clipped to the frame.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [u8; 3]) {
        let (w, h) = (self.width as i64, self.height as i64);
        let (x0, x1) = (x0.clamp(0, w), x1.clamp(0, w));
        let (y0, y1) = (y0.clamp(0, h), y1.clamp(0, h));
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x as u32, y as u32, rgb);
            }
        }
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }
}

/// Binary raster aligned to a [`Frame`]. Every stored value is 0 or 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, bits: vec![0; width as usize * height as usize] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, bits: vec![1; width as usize * height as usize] }
    }

    /// Build from raw values; any nonzero value is rejected unless it is 1.
    pub fn from_bits(width: u32, height: u32, bits: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width as usize * height as usize {
            return Err(Error::Input(format!(
                "mask buffer holds {} values, {width}x{height} needs {}",
                bits.len(),
                width as usize * height as usize
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Input("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Mask with the rectangle `[x0, x1) × [y0, y1)` set, clipped to the raster.
    pub fn rect(width: u32, height: u32, x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        let mut m = Self::empty(width, height);
        let (x0, x1) = (x0.clamp(0, width as i64), x1.clamp(0, width as i64));
        let (y0, y1) = (y0.clamp(0, height as i64), y1.clamp(0, height as i64));
        for y in y0..y1 {
            let row = y as usize * width as usize;
            m.bits[row + x0 as usize..row + x1 as usize].fill(1);
        }
        m
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on as u8;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Coordinates of all set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    pub fn ensure_same_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }
}

/// Axis-aligned box in pixel coordinates with a detector confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32, score: f64) -> Self {
        Self { x, y, w, h, score }
    }

    /// Clamp a possibly out-of-frame box given in float coordinates.
    ///
    /// Returns `None` when nothing of the box remains inside the frame.
    pub fn clamped(x: f64, y: f64, w: f64, h: f64, score: f64, frame_w: u32, frame_h: u32) -> Option<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return None;
        }
        let x0 = x.round().max(0.0);
        let y0 = y.round().max(0.0);
        let x1 = (x + w).round().min(frame_w as f64);
        let y1 = (y + h).round().min(frame_h as f64);
        if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
            return None;
        }
        let score = if score.is_finite() { score.clamp(0.0, 1.0) } else { 0.0 };
        Some(Self { x: x0 as u32, y: y0 as u32, w: (x1 - x0) as u32, h: (y1 - y0) as u32, score })
    }

    #[inline]
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn area(&self) -> usize {
        self.w as usize * self.h as usize
    }

    pub fn to_mask(&self, width: u32, height: u32) -> Mask {
        Mask::rect(width, height, self.x as i64, self.y as i64, self.right() as i64, self.bottom() as i64)
    }
}

/// A labeled pixel location, e.g. a gripper finger picked on the first frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub label: String,
}

impl Keypoint {
    pub fn new(x: u32, y: u32, label: impl Into<String>) -> Self {
        Self { x, y, label: label.into() }
    }

    pub fn with_label(&self, label: impl Into<String>) -> Self {
        Self { x: self.x, y: self.y, label: label.into() }
    }
}
