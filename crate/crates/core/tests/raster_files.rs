use autolabel_core::raster::{load_dsm, load_vis, save_dsm, save_vis, HeightRaster, RgbRaster, DEFAULT_NODATA};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn files_round_trip(w in 1usize..24, h in 1usize..24, seed in any::<u32>()) {
        let pixels: Vec<[u8; 3]> = (0..w * h)
            .map(|i| {
                let v = (i as u32).wrapping_mul(2654435761).wrapping_add(seed);
                [v as u8, (v >> 8) as u8, (v >> 16) as u8]
            })
            .collect();
        let heights: Vec<f32> = (0..w * h)
            .map(|i| if i % 7 == 3 { DEFAULT_NODATA } else { (i as f32 - seed as f32) * 0.013 })
            .collect();
        let vis = RgbRaster::new(w, h, pixels).unwrap();
        let dsm = HeightRaster::new(w, h, heights, DEFAULT_NODATA).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_vis(dir.path().join("a.ppm"), &vis).unwrap();
        save_dsm(dir.path().join("a.dsmf"), &dsm).unwrap();
        let vis_back = load_vis(dir.path().join("a.ppm")).unwrap();
        prop_assert_eq!(vis_back.pixels(), vis.pixels());
        prop_assert_eq!(vis_back.dims(), vis.dims());
        let back = load_dsm(dir.path().join("a.dsmf")).unwrap();
        let bits = |r: &HeightRaster| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&dsm));
    }
}

#[test]
fn missing_and_truncated_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_vis(dir.path().join("absent.ppm")).is_err());
    std::fs::write(dir.path().join("short.ppm"), b"P6\n4 4\n255\n\x01\x02").unwrap();
    assert!(load_vis(dir.path().join("short.ppm")).is_err());
    std::fs::write(dir.path().join("short.dsmf"), b"DSMF 1\n2 2\n-9999\n\0\0\0\0").unwrap();
    assert!(load_dsm(dir.path().join("short.dsmf")).is_err());
}
