use super::{vector_pair, Descriptor, DescriptorVector, FeatureId, SimilarityFeature};
use crate::error::{Error, Result};
use crate::glyphs::GlyphRaster;

/// 58 uniform patterns plus one bin for everything else.
pub const LBP_BINS: usize = 59;

// Clockwise from the pixel above the centre.
const NEIGHBORS: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

const fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

const fn build_uniform_table() -> [u8; 256] {
    let mut table = [(LBP_BINS - 1) as u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if transitions(code as u8) <= 2 {
            table[code] = next;
            next += 1;
        }
        code += 1;
    }
    table
}

static UNIFORM_TABLE: [u8; 256] = build_uniform_table();

/// Histogram bin of an 8-bit pattern: uniform codes in ascending order, then
/// the shared non-uniform bin.
pub fn uniform_lbp_bin(code: u8) -> usize {
    UNIFORM_TABLE[code as usize] as usize
}

/// Pattern at an interior pixel; bit `n` is set when neighbour `n` is at
/// least as bright as the centre.
fn pattern(raster: &GlyphRaster, x: usize, y: usize) -> u8 {
    let centre = raster.get(x, y);
    NEIGHBORS.iter().enumerate().fold(0u8, |code, (bit, &(dx, dy))| {
        let n = raster.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if n >= centre {
            code | (1 << bit)
        } else {
            code
        }
    })
}

/// L1-normalized uniform-pattern histogram over interior pixels.
pub fn lbp_histogram(raster: &GlyphRaster) -> Result<Vec<f64>> {
    let (w, h) = (raster.width(), raster.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidParameter(format!("LBP needs at least 3x3, got {w}x{h}")));
    }
    let mut counts = [0u64; LBP_BINS];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            counts[uniform_lbp_bin(pattern(raster, x, y))] += 1;
        }
    }
    let total = ((w - 2) * (h - 2)) as f64;
    Ok(counts.iter().map(|&c| c as f64 / total).collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LbpFeature;

impl SimilarityFeature for LbpFeature {
    fn id(&self) -> FeatureId {
        FeatureId::Lbp
    }

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor> {
        Ok(Descriptor::Vector(DescriptorVector {
            feature: FeatureId::Lbp,
            values: lbp_histogram(raster)?,
            source_dims: (raster.width(), raster.height()),
        }))
    }

    /// Histogram intersection over the larger histogram mass, which is 1 up
    /// to rounding; dividing makes identical histograms score exactly 1.
    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        let (x, y) = vector_pair(FeatureId::Lbp, a, b)?;
        let s: f64 = x.values.iter().zip(&y.values).map(|(p, q)| p.min(*q)).sum();
        let mass = x.values.iter().sum::<f64>().max(y.values.iter().sum());
        if mass == 0.0 {
            return Ok(1.0);
        }
        Ok((s / mass).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_eight_uniform_patterns() {
        let uniform = (0..=255u8).filter(|&c| transitions(c) <= 2).count();
        assert_eq!(uniform, 58);
        assert_eq!(uniform_lbp_bin(0), 0);
        assert_eq!(uniform_lbp_bin(255), 57);
        // 0b0101_0101 alternates: non-uniform.
        assert_eq!(uniform_lbp_bin(0x55), 58);
    }

    #[test]
    fn flat_raster_is_one_hot_at_all_ones() {
        let r = GlyphRaster::filled(6, 5, 77).unwrap();
        for y in 1..4 {
            for x in 1..5 {
                assert_eq!(pattern(&r, x, y), 0xFF);
            }
        }
        let h = lbp_histogram(&r).unwrap();
        assert_eq!(h[57], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
        assert_eq!(LbpFeature.similarity(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn hand_checked_pattern() {
        // 06 11 14 / 09 10 10 / 19 00 22, centre 10.
        let r = GlyphRaster::new(3, 3, vec![6, 11, 14, 9, 10, 10, 19, 0, 22]).unwrap();
        // Neighbours clockwise from top: 11 14 10 22 0 19 9 6.
        assert_eq!(pattern(&r, 1, 1), 0b0010_1111);
    }

    #[test]
    fn too_small() {
        assert!(lbp_histogram(&GlyphRaster::filled(2, 5, 0).unwrap()).is_err());
    }
}
