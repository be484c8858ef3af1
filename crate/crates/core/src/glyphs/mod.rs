//! Template glyph rasters: ingestion, binarization and synthetic fixtures.

mod raster;
mod set;
mod synth;

pub use raster::{binarize, otsu_threshold, BinarizePolicy, BinaryGlyph, GlyphRaster};
pub use set::{
    load_template_set, parse_manifest, read_gray_image, write_pgm, ManifestEntry, TemplateSet, DEFAULT_SIDE,
    MANIFEST_NAME,
};
pub use synth::{synth_template_set, template_strokes};
