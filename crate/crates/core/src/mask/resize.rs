use serde::{Deserialize, Serialize};

use super::raster::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Nearest,
    Bilinear,
    Lanczos3,
}

impl ResizeFilter {
    fn radius(self) -> f64 {
        match self {
            ResizeFilter::Nearest => 0.5,
            ResizeFilter::Bilinear => 1.0,
            ResizeFilter::Lanczos3 => 3.0,
        }
    }

    fn weight(self, x: f64) -> f64 {
        match self {
            ResizeFilter::Nearest => unreachable!("nearest is sampled directly"),
            ResizeFilter::Bilinear => (1.0 - x.abs()).max(0.0),
            ResizeFilter::Lanczos3 => {
                if x.abs() >= 3.0 {
                    0.0
                } else {
                    sinc(x) * sinc(x / 3.0)
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Mirror an out-of-range index back into `[0, n)`.
fn reflect(mut i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Per-output-sample source taps and normalized weights along one axis.
fn taps(filter: ResizeFilter, src: u32, dst: u32) -> Vec<Vec<(usize, f32)>> {
    let scale = src as f64 / dst as f64;
    let stretch = scale.max(1.0);
    let support = filter.radius() * stretch;
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut row: Vec<(usize, f64)> = Vec::new();
            for j in lo..=hi {
                let w = filter.weight((j as f64 - center) / stretch);
                if w != 0.0 {
                    row.push((reflect(j, src as i64), w));
                }
            }
            let total: f64 = row.iter().map(|t| t.1).sum();
            row.into_iter().map(|(j, w)| (j, (w / total) as f32)).collect()
        })
        .collect()
}

/// Resample a frame to exactly `width × height`.
///
/// Filtered modes widen their kernel when downscaling and sample past the
/// borders by reflection. Channel values are rounded half-up and clamped.
pub fn resize_frame(f: &Frame, width: u32, height: u32, filter: ResizeFilter) -> Frame {
    assert!(width > 0 && height > 0, "target dimensions must be positive");
    let (sw, sh) = f.dims();
    if filter == ResizeFilter::Nearest {
        let src = f.pixels();
        let mut out = Vec::with_capacity(width as usize * height as usize * 3);
        let xs: Vec<usize> = (0..width)
            .map(|x| (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw as usize - 1))
            .collect();
        for y in 0..height {
            let sy = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh as usize - 1);
            let row = sy * sw as usize * 3;
            for &sx in &xs {
                let i = row + sx * 3;
                out.extend_from_slice(&src[i..i + 3]);
            }
        }
        return Frame::new(width, height, out).expect("dims checked");
    }

    let htaps = taps(filter, sw, width);
    let vtaps = taps(filter, sh, height);
    let src = f.pixels();

    // horizontal pass: sh rows × width columns
    let mut mid = vec![0f32; sh as usize * width as usize * 3];
    for y in 0..sh as usize {
        let srow = &src[y * sw as usize * 3..(y + 1) * sw as usize * 3];
        let drow = &mut mid[y * width as usize * 3..(y + 1) * width as usize * 3];
        for (x, tap) in htaps.iter().enumerate() {
            let mut acc = [0f32; 3];
            for &(j, w) in tap {
                for c in 0..3 {
                    acc[c] += srow[j * 3 + c] as f32 * w;
                }
            }
            drow[x * 3..x * 3 + 3].copy_from_slice(&acc);
        }
    }

    let stride = width as usize * 3;
    let mut out = vec![0u8; height as usize * stride];
    for (y, tap) in vtaps.iter().enumerate() {
        let drow = &mut out[y * stride..(y + 1) * stride];
        let mut acc = vec![0f32; stride];
        for &(j, w) in tap {
            let mrow = &mid[j * stride..(j + 1) * stride];
            for (a, &v) in acc.iter_mut().zip(mrow) {
                *a += v * w;
            }
        }
        for (d, a) in drow.iter_mut().zip(acc) {
            *d = (a + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Frame::new(width, height, out).expect("dims checked")
}
