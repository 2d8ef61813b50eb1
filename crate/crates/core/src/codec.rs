//! PNG and base64 helpers for frames crossing process or disk boundaries.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::mask::Frame;

/// Lossless PNG encoding. Output bytes are a deterministic function of the frame.
pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.pixels().len() / 4);
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
        .write_image(frame.pixels(), frame.width(), frame.height(), ExtendedColorType::Rgb8)
        .expect("in-memory png encoding cannot fail for a valid frame");
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<Frame> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(w, h, img.into_raw())
}

pub fn read_png(path: &Path) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode_png(frame)).map_err(|e| Error::io(path, e))
}

pub fn frame_to_b64(frame: &Frame) -> String {
    STANDARD.encode(encode_png(frame))
}

pub fn frame_from_b64(s: &str) -> Result<Frame> {
    let bytes = STANDARD
        .decode(s.trim())
        .map_err(|e| Error::Format(format!("base64: {e}")))?;
    decode_png(&bytes)
}
