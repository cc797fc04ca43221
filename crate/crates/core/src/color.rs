//! sRGB conversions to CIELAB (D65) and HSV.

use crate::raster::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabPixel {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabPixel {
    pub fn distance(&self, other: &LabPixel) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &LabPixel) -> f64 {
        let dl = self.l - other.l;
        let da = self.a - other.a;
        let db = self.b - other.b;
        dl * dl + da * da + db * db
    }
}

/// Hue in degrees [0, 360), saturation and value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HsvPixel {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

// D65 reference white
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

pub fn rgb_to_lab([r, g, b]: Rgb) -> LabPixel {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / XN), lab_f(y / YN), lab_f(z / ZN));
    LabPixel {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Whole-image conversion, memoized per distinct color.
pub(crate) fn lab_image(pixels: &[Rgb]) -> Vec<LabPixel> {
    let mut cache = std::collections::HashMap::new();
    pixels
        .iter()
        .map(|&p| *cache.entry(p).or_insert_with(|| rgb_to_lab(p)))
        .collect()
}

pub fn rgb_to_hsv([r, g, b]: Rgb) -> HsvPixel {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    HsvPixel {
        h: if h >= 360.0 { h - 360.0 } else { h },
        s: if max == 0.0 { 0.0 } else { delta / max },
        v: max,
    }
}

pub fn hsv_to_rgb(p: HsvPixel) -> Rgb {
    let c = p.v * p.s;
    let hp = p.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = p.v - c;
    let to8 = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn black_and_white() {
        let lab = rgb_to_lab([0, 0, 0]);
        assert!(lab.l.abs() < 1e-9);
        assert_eq!(rgb_to_hsv([0, 0, 0]).v, 0.0);

        let lab = rgb_to_lab([255, 255, 255]);
        assert!((lab.l - 100.0).abs() < 1e-3, "{lab:?}");
        assert!(lab.a.abs() < 1e-2 && lab.b.abs() < 1e-2, "{lab:?}");
        let hsv = rgb_to_hsv([255, 255, 255]);
        assert_eq!((hsv.s, hsv.v), (0.0, 1.0));
    }

    #[test]
    fn pure_red() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), HsvPixel { h: 0.0, s: 1.0, v: 1.0 });
        // textbook CIELAB for sRGB red: (53.24, 80.09, 67.20)
        let lab = rgb_to_lab([255, 0, 0]);
        assert!(
            (lab.l - 53.24).abs() < 0.05 && (lab.a - 80.09).abs() < 0.05 && (lab.b - 67.20).abs() < 0.05,
            "{lab:?}"
        );
    }

    #[test]
    fn primary_hues() {
        assert_eq!(rgb_to_hsv([0, 255, 0]).h, 120.0);
        assert_eq!(rgb_to_hsv([0, 0, 255]).h, 240.0);
        assert_eq!(rgb_to_hsv([255, 0, 255]).h, 300.0);
    }

    proptest! {
        #[test]
        fn hsv_round_trip(r: u8, g: u8, b: u8) {
            let back = hsv_to_rgb(rgb_to_hsv([r, g, b]));
            for (x, y) in back.iter().zip([r, g, b]) {
                prop_assert!((*x as i32 - y as i32).abs() <= 1);
            }
        }

        #[test]
        fn grays_are_neutral(v: u8) {
            let hsv = rgb_to_hsv([v, v, v]);
            prop_assert_eq!(hsv.s, 0.0);
            let lab = rgb_to_lab([v, v, v]);
            prop_assert!(lab.a.abs() < 0.5 && lab.b.abs() < 0.5);
        }

        #[test]
        fn hsv_ranges(r: u8, g: u8, b: u8) {
            let hsv = rgb_to_hsv([r, g, b]);
            prop_assert!((0.0..360.0).contains(&hsv.h));
            prop_assert!((0.0..=1.0).contains(&hsv.s) && (0.0..=1.0).contains(&hsv.v));
        }
    }
}
