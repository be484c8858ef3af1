use super::{Descriptor, FeatureId, SimilarityFeature};
use crate::error::{Error, Result};
use crate::glyphs::{binarize, BinarizePolicy, BinaryGlyph, GlyphRaster};

/// Intersection over union of two foreground masks; two blank masks are
/// identical.
pub fn pixel_miou_similarity(a: &BinaryGlyph, b: &BinaryGlyph) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "masks {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.mask().iter().zip(b.mask()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone)]
pub struct PixelMIoUFeature {
    policy: BinarizePolicy,
}

impl PixelMIoUFeature {
    pub fn new(policy: BinarizePolicy) -> Self {
        PixelMIoUFeature { policy }
    }
}

impl SimilarityFeature for PixelMIoUFeature {
    fn id(&self) -> FeatureId {
        FeatureId::PixelMiou
    }

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor> {
        Ok(Descriptor::Mask(binarize(raster, self.policy)))
    }

    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        match (a, b) {
            (Descriptor::Mask(x), Descriptor::Mask(y)) => pixel_miou_similarity(x, y),
            _ => Err(Error::InvalidParameter("pixel mIoU compares binary masks only".into())),
        }
    }
}
