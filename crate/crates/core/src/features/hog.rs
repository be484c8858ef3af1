use serde::{Deserialize, Serialize};

use super::{clamped_cosine, vector_pair, Descriptor, DescriptorVector, FeatureId, SimilarityFeature};
use crate::error::{Error, Result};
use crate::glyphs::GlyphRaster;

/// Histogram-of-oriented-gradients geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    /// Cell side in pixels.
    pub cell: usize,
    /// Block side in cells; blocks tile the cell grid without overlap.
    pub block: usize,
    /// Unsigned orientation bins over [0°, 180°).
    pub bins: usize,
    pub epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell: 8,
            block: 2,
            bins: 9,
            epsilon: 1e-6,
        }
    }
}

impl HogConfig {
    pub fn min_side(&self) -> usize {
        self.cell * self.block
    }

    /// Descriptor length for a `width × height` raster.
    pub fn descriptor_len(&self, width: usize, height: usize) -> usize {
        let bx = width / self.cell / self.block;
        let by = height / self.cell / self.block;
        bx * by * self.block * self.block * self.bins
    }
}

#[derive(Debug, Clone)]
pub struct HogFeature {
    cfg: HogConfig,
}

impl HogFeature {
    pub fn new(cfg: HogConfig) -> Self {
        HogFeature { cfg }
    }

    pub fn descriptor(&self, raster: &GlyphRaster) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        let (w, h) = (raster.width(), raster.height());
        if w < cfg.min_side() || h < cfg.min_side() {
            return Err(Error::InvalidParameter(format!(
                "HOG needs at least {0}x{0}, got {w}x{h}",
                cfg.min_side()
            )));
        }
        let (cells_x, cells_y) = (w / cfg.cell, h / cfg.cell);
        let mut hist = vec![0.0; cells_x * cells_y * cfg.bins];
        let px = |x: usize, y: usize| f64::from(raster.get(x, y));
        let bin_width = 180.0 / cfg.bins as f64;

        for y in 0..cells_y * cfg.cell {
            for x in 0..cells_x * cfg.cell {
                let gx = px((x + 1).min(w - 1), y) - px(x.saturating_sub(1), y);
                let gy = px(x, (y + 1).min(h - 1)) - px(x, y.saturating_sub(1));
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut angle = gy.atan2(gx).to_degrees();
                if angle < 0.0 {
                    angle += 180.0;
                }
                if angle >= 180.0 {
                    angle -= 180.0;
                }
                let bin = ((angle / bin_width) as usize).min(cfg.bins - 1);
                let cell = (y / cfg.cell) * cells_x + x / cfg.cell;
                hist[cell * cfg.bins + bin] += mag;
            }
        }

        let (blocks_x, blocks_y) = (cells_x / cfg.block, cells_y / cfg.block);
        let mut out = Vec::with_capacity(self.cfg.descriptor_len(w, h));
        for by in 0..blocks_y {
            for bx in 0..blocks_x {
                let start = out.len();
                for cy in by * cfg.block..(by + 1) * cfg.block {
                    for cx in bx * cfg.block..(bx + 1) * cfg.block {
                        let cell = cy * cells_x + cx;
                        out.extend_from_slice(&hist[cell * cfg.bins..(cell + 1) * cfg.bins]);
                    }
                }
                let block = &mut out[start..];
                let norm = (block.iter().map(|v| v * v).sum::<f64>() + cfg.epsilon * cfg.epsilon).sqrt();
                block.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(out)
    }
}

impl SimilarityFeature for HogFeature {
    fn id(&self) -> FeatureId {
        FeatureId::Hog
    }

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor> {
        Ok(Descriptor::Vector(DescriptorVector {
            feature: FeatureId::Hog,
            values: self.descriptor(raster)?,
            source_dims: (raster.width(), raster.height()),
        }))
    }

    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        let (x, y) = vector_pair(FeatureId::Hog, a, b)?;
        Ok(clamped_cosine(&x.values, &y.values))
    }
}
