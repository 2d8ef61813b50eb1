use std::collections::VecDeque;

use super::raster::{BoundingBox, Keypoint, Mask};
use crate::error::{Error, Result};

/// Per-pixel OR.
pub fn union(a: &Mask, b: &Mask) -> Result<Mask> {
    a.ensure_same_dims(b)?;
    let mut out = a.clone();
    for (o, &v) in out.bits_mut().iter_mut().zip(b.bits()) {
        *o |= v;
    }
    Ok(out)
}

/// Union of any number of masks sharing `dims`.
pub fn union_all<'a>(dims: (u32, u32), masks: impl IntoIterator<Item = &'a Mask>) -> Result<Mask> {
    let mut out = Mask::empty(dims.0, dims.1);
    for m in masks {
        if m.dims() != dims {
            return Err(Error::shape(dims, m.dims()));
        }
        for (o, &v) in out.bits_mut().iter_mut().zip(m.bits()) {
            *o |= v;
        }
    }
    Ok(out)
}

pub fn intersection(a: &Mask, b: &Mask) -> Result<Mask> {
    a.ensure_same_dims(b)?;
    let mut out = a.clone();
    for (o, &v) in out.bits_mut().iter_mut().zip(b.bits()) {
        *o &= v;
    }
    Ok(out)
}

/// Pixels set in `a` but not in `b`.
pub fn difference(a: &Mask, b: &Mask) -> Result<Mask> {
    a.ensure_same_dims(b)?;
    let mut out = a.clone();
    for (o, &v) in out.bits_mut().iter_mut().zip(b.bits()) {
        *o &= 1 - v;
    }
    Ok(out)
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x & y) as usize;
        uni += (x | y) as usize;
    }
    if uni == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / uni as f64)
}

/// Mean of set-pixel coordinates rounded half-up on each axis.
pub fn centroid(m: &Mask) -> Result<Keypoint> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for (x, y) in m.set_pixels() {
        sx += x as u64;
        sy += y as u64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    // floor(sum / n + 1/2) in integers
    let half_up = |s: u64| (2 * s + n) / (2 * n);
    Ok(Keypoint::new(half_up(sx) as u32, half_up(sy) as u32, ""))
}

/// Unrounded centroid, used for motion estimates.
pub(crate) fn centroid_f64(m: &Mask) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0f64, 0f64, 0usize);
    for (x, y) in m.set_pixels() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Tightest box around the set pixels, with score 1.0.
pub fn bbox_of(m: &Mask) -> Result<BoundingBox> {
    let (w, h) = m.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0u32, 0u32);
    let mut any = false;
    for (x, y) in m.set_pixels() {
        any = true;
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1, 1.0))
}

/// 4-connected components with at least `min_area` pixels.
///
/// Each component comes back as a full-size mask. Order is by descending
/// area, ties broken by the row-major position of the component's first
/// pixel.
pub fn connected_components(m: &Mask, min_area: usize) -> Vec<Mask> {
    let (w, h) = m.dims();
    let (wu, hu) = (w as usize, h as usize);
    let bits = m.bits();
    let mut labels = vec![0u32; bits.len()];
    // (label, area, first index)
    let mut found: Vec<(u32, usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut next = 0u32;

    for start in 0..bits.len() {
        if bits[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        let mut area = 0usize;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % wu, i / wu);
            let mut visit = |j: usize| {
                if bits[j] != 0 && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < wu {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - wu);
            }
            if y + 1 < hu {
                visit(i + wu);
            }
        }
        found.push((next, area, start));
    }

    found.retain(|&(_, area, _)| area >= min_area.max(1));
    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    if found.is_empty() {
        return Vec::new();
    }

    // label -> output slot
    let mut slot = vec![usize::MAX; next as usize + 1];
    for (k, &(label, _, _)) in found.iter().enumerate() {
        slot[label as usize] = k;
    }
    let mut out: Vec<Mask> = (0..found.len()).map(|_| Mask::empty(w, h)).collect();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            let k = slot[l as usize];
            if k != usize::MAX {
                out[k].bits_mut()[i] = 1;
            }
        }
    }
    out
}

/// Shift a mask by whole pixels; pixels leaving the raster are dropped.
pub fn translate(m: &Mask, dx: i64, dy: i64) -> Mask {
    let (w, h) = m.dims();
    let mut out = Mask::empty(w, h);
    if dx.unsigned_abs() >= w as u64 || dy.unsigned_abs() >= h as u64 {
        return out;
    }
    let wu = w as usize;
    let (sx0, dx0, len) = if dx >= 0 {
        (0usize, dx as usize, wu - dx as usize)
    } else {
        ((-dx) as usize, 0usize, wu - (-dx) as usize)
    };
    let src = m.bits();
    let dst = out.bits_mut();
    for y in 0..h as i64 {
        let ty = y + dy;
        if ty < 0 || ty >= h as i64 {
            continue;
        }
        let s = y as usize * wu + sx0;
        let d = ty as usize * wu + dx0;
        dst[d..d + len].copy_from_slice(&src[s..s + len]);
    }
    out
}

/// Morphological dilation with a `(2r+1) × (2r+1)` square.
pub fn dilate(m: &Mask, radius: u32) -> Mask {
    if radius == 0 {
        return m.clone();
    }
    let (w, h) = (m.width() as usize, m.height() as usize);
    let r = radius as usize;
    let src = m.bits();
    let mut horiz = vec![0u8; src.len()];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        sliding_max(row, out, r);
    }
    let mut result = Mask::empty(m.width(), m.height());
    let mut col = vec![0u8; h];
    let mut col_out = vec![0u8; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = horiz[y * w + x];
        }
        sliding_max(&col, &mut col_out, r);
        let bits = result.bits_mut();
        for y in 0..h {
            bits[y * w + x] = col_out[y];
        }
    }
    result
}

fn sliding_max(src: &[u8], out: &mut [u8], r: usize) {
    let n = src.len();
    // window count of ones in [i-r, i+r]
    let mut count = src[..(r + 1).min(n)].iter().map(|&b| b as usize).sum::<usize>();
    for i in 0..n {
        out[i] = (count > 0) as u8;
        if i + r + 1 < n {
            count += src[i + r + 1] as usize;
        }
        if i >= r {
            count -= src[i - r] as usize;
        }
    }
}
