use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{connected_components, rgb_to_hsv, union_all, Frame, Mask};

/// A named HSV box. `hue_range` wraps through 0 when `lo > hi`.
/// All comparisons are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorClass {
    pub name: String,
    pub hue_range: [f32; 2],
    pub sat_min: f32,
    pub val_min: f32,
}

impl ColorClass {
    pub fn new(name: impl Into<String>, lo: f32, hi: f32, sat_min: f32, val_min: f32) -> Self {
        Self { name: name.into(), hue_range: [lo, hi], sat_min, val_min }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.hue_range;
        let hue_ok = |v: f32| (0.0..360.0).contains(&v);
        if !hue_ok(lo) || !hue_ok(hi) {
            return Err(Error::Config(format!("color class {:?}: hue bounds must lie in [0, 360)", self.name)));
        }
        if !(0.0..=1.0).contains(&self.sat_min) || !(0.0..=1.0).contains(&self.val_min) {
            return Err(Error::Config(format!("color class {:?}: sat_min/val_min must lie in [0, 1]", self.name)));
        }
        Ok(())
    }

    #[inline]
    pub fn matches_hsv(&self, h: f32, s: f32, v: f32) -> bool {
        if s < self.sat_min || v < self.val_min {
            return false;
        }
        let [lo, hi] = self.hue_range;
        if lo <= hi {
            h >= lo && h <= hi
        } else {
            h >= lo || h <= hi
        }
    }

    #[inline]
    pub fn matches(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        self.matches_hsv(h, s, v)
    }
}

/// Raw per-pixel threshold masks for several classes in one pass.
pub fn threshold_masks(frame: &Frame, classes: &[&ColorClass]) -> Vec<Mask> {
    let (w, h) = frame.dims();
    let n = w as usize * h as usize;
    let mut bits: Vec<Vec<u8>> = classes.iter().map(|_| vec![0u8; n]).collect();
    // gray pixels have saturation 0, so skip them unless some class accepts that
    let skip_gray = classes.iter().all(|c| c.sat_min > 0.0);
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        if skip_gray && px[0] == px[1] && px[1] == px[2] {
            continue;
        }
        let (hh, s, v) = rgb_to_hsv([px[0], px[1], px[2]]);
        for (k, c) in classes.iter().enumerate() {
            if c.matches_hsv(hh, s, v) {
                bits[k][i] = 1;
            }
        }
    }
    bits.into_iter()
        .map(|b| Mask::from_bits(w, h, b).expect("threshold buffer sized to frame"))
        .collect()
}

/// Pixels of `class`, keeping only 4-connected components of at least `min_area`.
pub fn chroma_segment(frame: &Frame, class: &ColorClass, min_area: usize) -> Mask {
    let raw = threshold_masks(frame, &[class]).pop().expect("one class in, one mask out");
    let comps = connected_components(&raw, min_area.max(1));
    union_all(frame.dims(), comps.iter()).expect("components share frame dims")
}
