//! Aligned VIS / DSM rasters and their on-disk formats.
//!
//! VIS imagery is stored as binary PPM (`P6`, maxval 255). Heights use a small
//! fixed layout, `DSMF 1`:
//!
//! ```text
//! DSMF 1\n
//! <width> <height>\n
//! <nodata as decimal>\n
//! <width * height little-endian f32, row-major, top-left origin>
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
    /// Meters per pixel. Never read from or written to disk.
    pub gsd: Option<f64>,
}

impl RgbRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
            gsd: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_gsd(mut self, gsd: f64) -> Self {
        self.gsd = Some(gsd);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Rgb) {
        self.pixels[y * self.width + x] = value;
    }

    /// Rec. 601 luma in [0, 255].
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| luma(p)).collect()
    }
}

pub(crate) fn luma([r, g, b]: Rgb) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Per-pixel surface heights in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightRaster {
    width: usize,
    height: usize,
    values: Vec<f32>,
    nodata: f32,
}

impl HeightRaster {
    pub fn new(width: usize, height: usize, values: Vec<f32>, nodata: f32) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|&v| !is_nodata(v, nodata) && !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite height at index {i} (nodata is {nodata})"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            nodata,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], DEFAULT_NODATA)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    /// Height at (x, y), `None` for nodata cells.
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        self.at(y * self.width + x)
    }

    pub fn at(&self, index: usize) -> Option<f32> {
        let v = self.values[index];
        (!is_nodata(v, self.nodata)).then_some(v)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(move |&v| !is_nodata(v, self.nodata))
    }
}

pub const DEFAULT_NODATA: f32 = -9999.0;

fn is_nodata(v: f32, nodata: f32) -> bool {
    v == nodata || (nodata.is_nan() && v.is_nan())
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} raster needs {} cells, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PPM (P6)

pub fn load_vis(path: impl AsRef<Path>) -> Result<RgbRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn save_vis(path: impl AsRef<Path>, raster: &RgbRaster) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(raster)).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(raster: &RgbRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.reserve(raster.pixels.len() * 3);
    for p in &raster.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbRaster> {
    if bytes.len() < 2 {
        return Err(Error::format("truncated header", bytes.len()));
    }
    match &bytes[..2] {
        b"P6" => {}
        [b'P', _] => return Err(Error::format("unsupported format", 0)),
        _ => return Err(Error::format("bad magic, expected P6", 0)),
    }
    let mut cursor = HeaderCursor::new(bytes, 2);
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}"), cursor.pos));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::format("missing header terminator", cursor.pos)),
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero dimension", cursor.pos));
    }
    let data = &bytes[cursor.pos..];
    let need = width * height * 3;
    if data.len() < need {
        return Err(Error::format(
            format!("truncated pixel data: need {need} bytes, have {}", data.len()),
            bytes.len(),
        ));
    }
    let pixels = data[..need].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RgbRaster::new(width, height, pixels)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(format!("malformed header: expected {what}"), start));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("malformed header: {what} out of range"), start))
    }
}

// ---------------------------------------------------------------------------
// DSMF v1

const DSMF_MAGIC: &[u8] = b"DSMF 1\n";

pub fn load_dsm(path: impl AsRef<Path>) -> Result<HeightRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dsm(&bytes)
}

pub fn save_dsm(path: impl AsRef<Path>, raster: &HeightRaster) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dsm(raster)).map_err(|e| Error::io(path, e))
}

pub fn encode_dsm(raster: &HeightRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + raster.values.len() * 4);
    out.extend_from_slice(DSMF_MAGIC);
    out.extend_from_slice(format!("{} {}\n{}\n", raster.width, raster.height, raster.nodata).as_bytes());
    for v in &raster.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dsm(bytes: &[u8]) -> Result<HeightRaster> {
    if !bytes.starts_with(DSMF_MAGIC) {
        return Err(Error::format("bad magic, expected \"DSMF 1\"", 0));
    }
    let mut pos = DSMF_MAGIC.len();
    let line = |pos: &mut usize| -> Result<&str> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| Error::format("truncated header", bytes.len()))?;
        *pos = end + 1;
        std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::format("header is not ASCII", start))
    };
    let dims_at = pos;
    let dims = line(&mut pos)?;
    let mut parts = dims.split_ascii_whitespace().map(str::parse::<usize>);
    let (width, height) = match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::format(format!("malformed dimensions {dims:?}"), dims_at)),
    };
    let nodata_at = pos;
    let nodata_text = line(&mut pos)?;
    let nodata: f32 = nodata_text
        .trim()
        .parse()
        .map_err(|_| Error::format(format!("malformed nodata {nodata_text:?}"), nodata_at))?;

    let payload = &bytes[pos..];
    let need = width * height * 4;
    if payload.len() != need {
        return Err(Error::format(
            format!(
                "payload size mismatch: {width}x{height} needs {need} bytes, found {}",
                payload.len()
            ),
            pos,
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = values.iter().position(|&v| !is_nodata(v, nodata) && !v.is_finite()) {
        return Err(Error::format("non-finite height value", pos + 4 * i));
    }
    HeightRaster::new(width, height, values, nodata)
}

// ---------------------------------------------------------------------------
// Alignment

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentReport {
    pub aligned: bool,
    pub vis_dims: (usize, usize),
    pub dsm_dims: (usize, usize),
    pub message: String,
}

pub fn validate_alignment(vis: &RgbRaster, dsm: &HeightRaster) -> AlignmentReport {
    let vis_dims = vis.dims();
    let dsm_dims = dsm.dims();
    let aligned = vis_dims == dsm_dims;
    let message = if aligned {
        format!("aligned at {}x{}", vis_dims.0, vis_dims.1)
    } else {
        format!(
            "VIS is {}x{} but DSM is {}x{}",
            vis_dims.0, vis_dims.1, dsm_dims.0, dsm_dims.1
        )
    };
    AlignmentReport {
        aligned,
        vis_dims,
        dsm_dims,
        message,
    }
}

// ---------------------------------------------------------------------------
// Resampling

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Area-average down to `ceil(dim / factor)`.
    Down,
    /// Area-average down, then bilinear back up to the original size.
    DownThenUp,
}

pub trait Resample: Sized {
    fn resample(&self, factor: f64, mode: ResampleMode) -> Result<Self>;
}

/// A float plane where `None` marks cells excluded from every average.
struct Plane {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
}

impl Plane {
    fn down(&self, factor: f64) -> Plane {
        let wx = axis_weights(self.width, factor);
        let wy = axis_weights(self.height, factor);
        let mut values = Vec::with_capacity(wx.len() * wy.len());
        for row in &wy {
            for col in &wx {
                let mut sum = 0.0;
                let mut weight = 0.0;
                for &(sy, ky) in row {
                    for &(sx, kx) in col {
                        if let Some(v) = self.values[sy * self.width + sx] {
                            sum += v * kx * ky;
                            weight += kx * ky;
                        }
                    }
                }
                values.push((weight > 0.0).then(|| sum / weight));
            }
        }
        Plane {
            width: wx.len(),
            height: wy.len(),
            values,
        }
    }

    fn up(&self, width: usize, height: usize, factor: f64) -> Plane {
        let taps = |dst: usize, src_len: usize| -> (usize, usize, f64) {
            let s = ((dst as f64 + 0.5) / factor - 0.5).clamp(0.0, (src_len - 1) as f64);
            let s0 = s.floor() as usize;
            let s1 = (s0 + 1).min(src_len - 1);
            (s0, s1, s - s0 as f64)
        };
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, ty) = taps(y, self.height);
            for x in 0..width {
                let (x0, x1, tx) = taps(x, self.width);
                let corners = [
                    (x0, y0, (1.0 - tx) * (1.0 - ty)),
                    (x1, y0, tx * (1.0 - ty)),
                    (x0, y1, (1.0 - tx) * ty),
                    (x1, y1, tx * ty),
                ];
                let mut sum = 0.0;
                let mut weight = 0.0;
                for (cx, cy, k) in corners {
                    if k > 0.0 {
                        if let Some(v) = self.values[cy * self.width + cx] {
                            sum += v * k;
                            weight += k;
                        }
                    }
                }
                values.push((weight > 0.0).then(|| sum / weight));
            }
        }
        Plane { width, height, values }
    }

    fn apply(&self, factor: f64, mode: ResampleMode) -> Plane {
        let small = self.down(factor);
        match mode {
            ResampleMode::Down => small,
            ResampleMode::DownThenUp => small.up(self.width, self.height, factor),
        }
    }
}

/// Output cell -> list of (source index, overlap weight) for area averaging.
fn axis_weights(len: usize, factor: f64) -> Vec<Vec<(usize, f64)>> {
    let out_len = downsampled_len(len, factor);
    (0..out_len)
        .map(|i| {
            let a = i as f64 * factor;
            let b = ((i + 1) as f64 * factor).min(len as f64);
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(len);
            (first..last)
                .filter_map(|s| {
                    let k = b.min(s as f64 + 1.0) - a.max(s as f64);
                    (k > 0.0).then_some((s, k))
                })
                .collect()
        })
        .collect()
}

pub fn downsampled_len(len: usize, factor: f64) -> usize {
    ((len as f64 / factor).ceil() as usize).max(1)
}

fn check_factor(factor: f64) -> Result<()> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(Error::invalid(format!("resample factor must be >= 1, got {factor}")));
    }
    Ok(())
}

impl Resample for RgbRaster {
    fn resample(&self, factor: f64, mode: ResampleMode) -> Result<Self> {
        check_factor(factor)?;
        let planes: Vec<Plane> = (0..3)
            .map(|c| {
                Plane {
                    width: self.width,
                    height: self.height,
                    values: self.pixels.iter().map(|p| Some(p[c] as f64)).collect(),
                }
                .apply(factor, mode)
            })
            .collect();
        let (width, height) = (planes[0].width, planes[0].height);
        let pixels = (0..width * height)
            .map(|i| {
                let ch = |c: usize| planes[c].values[i].unwrap_or(0.0).round().clamp(0.0, 255.0) as u8;
                [ch(0), ch(1), ch(2)]
            })
            .collect();
        let mut out = RgbRaster::new(width, height, pixels)?;
        out.gsd = match mode {
            ResampleMode::Down => self.gsd.map(|g| g * factor),
            ResampleMode::DownThenUp => self.gsd,
        };
        Ok(out)
    }
}

impl Resample for HeightRaster {
    fn resample(&self, factor: f64, mode: ResampleMode) -> Result<Self> {
        check_factor(factor)?;
        let plane = Plane {
            width: self.width,
            height: self.height,
            values: (0..self.values.len()).map(|i| self.at(i).map(f64::from)).collect(),
        }
        .apply(factor, mode);
        let values = plane
            .values
            .iter()
            .map(|v| v.map_or(self.nodata, |v| v as f32))
            .collect();
        HeightRaster::new(plane.width, plane.height, values, self.nodata)
    }
}
