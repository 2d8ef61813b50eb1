/// RGB to HSV with hue in degrees `[0, 360)` and saturation/value in `[0, 1]`.
///
/// Achromatic pixels get hue 0.
#[inline]
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f32, f32, f32) {
    let r = rgb[0] as f32 / 255.0;
    let g = rgb[1] as f32 / 255.0;
    let b = rgb[2] as f32 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let mut h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    (h, s, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 255, 0]), (120.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 0, 255]), (240.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([128, 128, 128]).1, 0.0);
        let (h, _, _) = rgb_to_hsv([255, 0, 10]);
        assert!(h > 350.0 && h < 360.0);
    }
}
