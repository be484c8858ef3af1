use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// 8-bit grayscale raster, row-major, dark ink on a light background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlyphRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GlyphRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} raster needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GlyphRaster { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GlyphRaster::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_dims(&self, other: &GlyphRaster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Photometric inverse `255 - p`.
    pub fn inverted(&self) -> GlyphRaster {
        GlyphRaster {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| 255 - p).collect(),
        }
    }

    /// Rotate 90° clockwise.
    pub fn rotated90(&self) -> GlyphRaster {
        let (w, h) = (self.height, self.width);
        let mut pixels = vec![0; w * h];
        for y in 0..h {
            for x in 0..w {
                pixels[y * w + x] = self.get(y, self.height - 1 - x);
            }
        }
        GlyphRaster {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Intensities as a `height x width` matrix of `f64`.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.height, self.width, |y, x| f64::from(self.get(x, y)))
    }

    /// Corner-aligned bilinear resampling to floating point.
    ///
    /// Output pixel `x` samples source coordinate `x·(w_src-1)/(w_dst-1)`, so
    /// the four corners map exactly onto the source corners.
    pub fn resample(&self, width: usize, height: usize) -> Matrix {
        let xs = sample_positions(self.width, width);
        let ys = sample_positions(self.height, height);
        Matrix::from_fn(height, width, |y, x| {
            let (y0, y1, fy) = ys[y];
            let (x0, x1, fx) = xs[x];
            let p = |xx: usize, yy: usize| f64::from(self.get(xx, yy));
            let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
            let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
            top + (bottom - top) * fy
        })
    }

    /// Bilinear resize, rounded to the nearest intensity.
    pub fn resize(&self, width: usize, height: usize) -> Result<GlyphRaster> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let m = self.resample(width, height);
        let pixels = m.as_slice().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GlyphRaster::new(width, height, pixels)
    }
}

/// For each destination index: the two source taps and the interpolation weight.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|d| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                d as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Foreground mask of a binarized glyph (`true` = ink).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGlyph {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryGlyph {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} cells, got {}",
                width * height,
                mask.len()
            )));
        }
        Ok(BinaryGlyph { width, height, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// How a raster is split into ink and background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BinarizePolicy {
    /// Ink is every pixel strictly below the threshold.
    Fixed(u8),
    Otsu,
}

impl Default for BinarizePolicy {
    fn default() -> Self {
        BinarizePolicy::Fixed(128)
    }
}

pub fn binarize(raster: &GlyphRaster, policy: BinarizePolicy) -> BinaryGlyph {
    let threshold = match policy {
        BinarizePolicy::Fixed(t) => t,
        BinarizePolicy::Otsu => otsu_threshold(raster),
    };
    BinaryGlyph {
        width: raster.width,
        height: raster.height,
        mask: raster.pixels.iter().map(|&p| p < threshold).collect(),
    }
}

/// Otsu threshold `t` for the rule "ink = intensity < t".
///
/// Maximizes between-class variance over the 256-bin histogram; the first
/// (lowest) maximizer wins ties. A single-valued image returns that value,
/// which leaves the foreground empty.
pub fn otsu_threshold(raster: &GlyphRaster) -> u8 {
    let mut hist = [0u64; 256];
    for &p in &raster.pixels {
        hist[p as usize] += 1;
    }
    let total = raster.pixels.len() as f64;
    let total_sum: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let (mut below_count, mut below_sum) = (0.0, 0.0);
    let mut best: Option<(u8, f64)> = None;
    for t in 1..=255usize {
        below_count += hist[t - 1] as f64;
        below_sum += (t - 1) as f64 * hist[t - 1] as f64;
        let above_count = total - below_count;
        if below_count == 0.0 || above_count == 0.0 {
            continue;
        }
        let diff = total * below_sum - below_count * total_sum;
        let between = diff * diff / (below_count * above_count);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    match best {
        Some((t, _)) => t,
        // Uniform image.
        None => raster.pixels[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_raster_has_no_ink() {
        let r = GlyphRaster::filled(5, 4, 255).unwrap();
        assert_eq!(binarize(&r, BinarizePolicy::Fixed(128)).foreground_count(), 0);
        assert_eq!(binarize(&r, BinarizePolicy::Otsu).foreground_count(), 0);
        assert_eq!(otsu_threshold(&r), 255);
    }

    #[test]
    fn otsu_splits_two_modes() {
        let pixels: Vec<u8> = (0..20).map(|i| if i % 3 == 0 { 0 } else { 255 }).collect();
        let r = GlyphRaster::new(5, 4, pixels.clone()).unwrap();
        assert_eq!(otsu_threshold(&r), 1);
        let b = binarize(&r, BinarizePolicy::Otsu);
        for (m, p) in b.mask().iter().zip(&pixels) {
            assert_eq!(*m, *p == 0);
        }
    }

    #[test]
    fn ramp_fixed_threshold_counts_values_below() {
        let r = GlyphRaster::new(16, 16, (0..=255).collect()).unwrap();
        assert_eq!(binarize(&r, BinarizePolicy::Fixed(128)).foreground_count(), 128);
    }

    #[test]
    fn resize_contract() {
        let r = GlyphRaster::new(48, 64, (0..48 * 64).map(|i| (i % 251) as u8).collect()).unwrap();
        let big = r.resize(96, 96).unwrap();
        assert_eq!((big.width(), big.height()), (96, 96));
        // Corners are sampled exactly.
        assert_eq!(big.get(0, 0), r.get(0, 0));
        assert_eq!(big.get(95, 95), r.get(47, 63));
        assert_eq!(big.get(95, 0), r.get(47, 0));
    }

    #[test]
    fn resample_same_size_is_exact() {
        let r = GlyphRaster::new(7, 5, (0..35).map(|i| (i * 7) as u8).collect()).unwrap();
        assert_eq!(r.resample(7, 5), r.to_matrix());
    }

    #[test]
    fn rotation_moves_pixels() {
        let r = GlyphRaster::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let q = r.rotated90();
        assert_eq!((q.width(), q.height()), (2, 3));
        assert_eq!(q.pixels(), &[4, 1, 5, 2, 6, 3]);
    }

    #[test]
    fn invalid_rasters() {
        assert!(GlyphRaster::new(0, 3, vec![]).is_err());
        assert!(GlyphRaster::new(2, 2, vec![0; 3]).is_err());
    }
}
