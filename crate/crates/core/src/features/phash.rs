//! DCT perceptual hash.
//!
//! The raster is resampled to 32×32, transformed with an orthonormal 2-D
//! DCT-II, and the 8×8 low-frequency block is thresholded against the
//! median of its 63 AC coefficients (`bit = coeff > median`). Bit `8r + c`
//! holds coefficient `(r, c)`. The DC bit is always 0: it only encodes mean
//! brightness, and keeping it would make every non-black image differ from
//! the all-zero hash of a flat raster.

use super::{Descriptor, FeatureId, SimilarityFeature};
use crate::error::{Error, Result};
use crate::glyphs::GlyphRaster;
use crate::numeric::dct2;

pub const HASH_SIDE: usize = 32;
pub const HASH_BLOCK: usize = 8;

/// AC coefficients smaller than this fraction of |DC| are rounding noise.
const NOISE_FLOOR: f64 = 1e-9;

pub fn phash(raster: &GlyphRaster) -> u64 {
    let coeffs = dct2(&raster.resample(HASH_SIDE, HASH_SIDE));
    let floor = NOISE_FLOOR * coeffs[(0, 0)].abs();
    let mut block = [0.0; HASH_BLOCK * HASH_BLOCK];
    for r in 0..HASH_BLOCK {
        for c in 0..HASH_BLOCK {
            let v = coeffs[(r, c)];
            block[r * HASH_BLOCK + c] = if v.abs() <= floor { 0.0 } else { v };
        }
    }
    let mut ac: Vec<f64> = block[1..].to_vec();
    ac.sort_by(f64::total_cmp);
    let median = ac[ac.len() / 2];

    block
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v > median)
        .fold(0u64, |h, (i, _)| h | (1u64 << i))
}

pub fn phash_similarity(a: u64, b: u64) -> f64 {
    1.0 - f64::from((a ^ b).count_ones()) / 64.0
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PHashFeature;

impl SimilarityFeature for PHashFeature {
    fn id(&self) -> FeatureId {
        FeatureId::Phash
    }

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor> {
        Ok(Descriptor::Hash(phash(raster)))
    }

    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        match (a, b) {
            (Descriptor::Hash(x), Descriptor::Hash(y)) => Ok(phash_similarity(*x, *y)),
            _ => Err(Error::InvalidParameter("pHash compares hashes only".into())),
        }
    }
}
