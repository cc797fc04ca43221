//! Scalar-weighted VIS + DSM fusion.

use crate::error::{Error, Result};
use crate::raster::{GrayRaster, HeightRaster, RgbRaster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Weight of the VIS channels; the normalized DSM gets `1 - weight_vis`.
    pub weight_vis: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { weight_vis: 0.7 }
    }
}

impl FusionConfig {
    pub fn new(weight_vis: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight_vis) {
            return Err(Error::Config(format!(
                "fusion.weight_vis must lie in [0, 1], got {weight_vis}"
            )));
        }
        Ok(Self { weight_vis })
    }
}

/// Per-tile min-max stretch of the DSM to 0..=255. Nodata cells map to 0 and
/// a constant surface maps to all zeros.
pub fn normalize_dsm(dsm: &HeightRaster) -> Result<GrayRaster> {
    let (min, max) = dsm
        .valid_values()
        .fold(None, |acc: Option<(f32, f32)>, v| {
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        })
        .ok_or_else(|| Error::invalid("DSM has no valid cells"))?;
    let (min, range) = (min as f64, max as f64 - min as f64);
    let values = (0..dsm.values().len())
        .map(|i| match dsm.at(i) {
            Some(v) if range > 0.0 => (255.0 * (v as f64 - min) / range).round() as u8,
            _ => 0,
        })
        .collect();
    let (w, h) = dsm.dims();
    GrayRaster::new(w, h, values)
}

pub fn fuse(vis: &RgbRaster, dsm_gray: &GrayRaster, cfg: &FusionConfig) -> Result<RgbRaster> {
    if vis.dims() != dsm_gray.dims() {
        return Err(Error::DimensionMismatch(format!(
            "VIS {:?} vs DSM {:?}",
            vis.dims(),
            dsm_gray.dims()
        )));
    }
    let w = cfg.weight_vis;
    let pixels = vis
        .pixels()
        .iter()
        .zip(dsm_gray.values())
        .map(|(p, &g)| p.map(|c| (w * c as f64 + (1.0 - w) * g as f64).round().clamp(0.0, 255.0) as u8))
        .collect();
    let mut out = RgbRaster::new(vis.width(), vis.height(), pixels)?;
    out.gsd = vis.gsd;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;
    use proptest::prelude::*;

    #[test]
    fn constant_dsm_is_black() {
        let g = normalize_dsm(&HeightRaster::filled(4, 3, 7.5).unwrap()).unwrap();
        assert!(g.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn midpoint_rounds_half_up() {
        let d = HeightRaster::new(3, 1, vec![0.0, 5.0, 10.0], DEFAULT_NODATA).unwrap();
        assert_eq!(normalize_dsm(&d).unwrap().values(), &[0, 128, 255]);
    }

    #[test]
    fn nodata_maps_to_zero_and_is_ignored() {
        let d = HeightRaster::new(3, 1, vec![DEFAULT_NODATA, 2.0, 4.0], DEFAULT_NODATA).unwrap();
        assert_eq!(normalize_dsm(&d).unwrap().values(), &[0, 0, 255]);
        let all = HeightRaster::new(2, 1, vec![DEFAULT_NODATA; 2], DEFAULT_NODATA).unwrap();
        assert!(normalize_dsm(&all).is_err());
    }

    #[test]
    fn matches_scalar_oracle() {
        let values: Vec<f32> = (0..400).map(|i| ((i * 7919) % 1000) as f32 * 0.013 - 3.0).collect();
        let d = HeightRaster::new(20, 20, values.clone(), DEFAULT_NODATA).unwrap();
        let lo = values.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let expected: Vec<u8> = values
            .iter()
            .map(|&v| (255.0 * (v as f64 - lo) / (hi - lo) + 0.5).floor() as u8)
            .collect();
        assert_eq!(normalize_dsm(&d).unwrap().values(), expected.as_slice());
    }

    #[test]
    fn weight_extremes() {
        let vis = RgbRaster::new(2, 1, vec![[10, 20, 30], [200, 100, 0]]).unwrap();
        let gray = GrayRaster::new(2, 1, vec![50, 250]).unwrap();
        assert_eq!(fuse(&vis, &gray, &FusionConfig::new(1.0).unwrap()).unwrap(), vis);
        let out = fuse(&vis, &gray, &FusionConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(out.pixels(), &[[50; 3], [250; 3]]);
    }

    #[test]
    fn weighted_example() {
        let vis = RgbRaster::filled(1, 1, [100, 100, 100]).unwrap();
        let gray = GrayRaster::new(1, 1, vec![200]).unwrap();
        let out = fuse(&vis, &gray, &FusionConfig::default()).unwrap();
        assert_eq!(out.get(0, 0), [130, 130, 130]);
    }

    #[test]
    fn mismatch_and_bad_weight() {
        let vis = RgbRaster::filled(2, 2, [0; 3]).unwrap();
        let gray = GrayRaster::new(1, 1, vec![0]).unwrap();
        assert!(fuse(&vis, &gray, &FusionConfig::default()).is_err());
        assert!(FusionConfig::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_weight(c: u8, g: u8, w1 in 0.0f64..=1.0, w2 in 0.0f64..=1.0) {
            let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            let vis = RgbRaster::filled(1, 1, [c; 3]).unwrap();
            let gray = GrayRaster::new(1, 1, vec![g]).unwrap();
            let a = fuse(&vis, &gray, &FusionConfig::new(lo).unwrap()).unwrap().get(0, 0)[0];
            let b = fuse(&vis, &gray, &FusionConfig::new(hi).unwrap()).unwrap().get(0, 0)[0];
            if c >= g { prop_assert!(a <= b) } else { prop_assert!(a >= b) }
        }
    }
}
