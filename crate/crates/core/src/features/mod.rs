//! Pairwise template similarity from five classical image features.
//!
//! Each feature is a [`SimilarityFeature`]: it turns a raster into a
//! [`Descriptor`] once, then combines two descriptors with a symmetric rule.
//! Extractors live in a [`FeatureRegistry`] keyed by name so a run can pick
//! any subset.

mod gabor;
mod hog;
mod lbp;
mod phash;
mod pixel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gabor::{GaborConfig, GaborFeature};
pub use hog::{HogConfig, HogFeature};
pub use lbp::{uniform_lbp_bin, LbpFeature, LBP_BINS};
pub use phash::{phash, phash_similarity, PHashFeature};
pub use pixel::{pixel_miou_similarity, PixelMIoUFeature};

use crate::error::{Error, Result};
use crate::glyphs::{BinarizePolicy, BinaryGlyph, GlyphRaster, TemplateSet};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    PixelMiou,
    Phash,
    Hog,
    Lbp,
    Gabor,
}

impl FeatureId {
    pub const ALL: [FeatureId; 5] = [
        FeatureId::PixelMiou,
        FeatureId::Phash,
        FeatureId::Hog,
        FeatureId::Lbp,
        FeatureId::Gabor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::PixelMiou => "pixel_miou",
            FeatureId::Phash => "phash",
            FeatureId::Hog => "hog",
            FeatureId::Lbp => "lbp",
            FeatureId::Gabor => "gabor",
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "feature",
                name: s.to_string(),
                known: FeatureId::ALL.map(FeatureId::name).join(", "),
            })
    }
}

/// Every geometry constant the extractors use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Binarization for pixel mIoU.
    pub binarize: BinarizePolicy,
    pub hog: HogConfig,
    pub gabor: GaborConfig,
}

/// Real-valued descriptor plus the size of the raster it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub feature: FeatureId,
    pub values: Vec<f64>,
    pub source_dims: (usize, usize),
}

impl DescriptorVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    Mask(BinaryGlyph),
    Hash(u64),
    Vector(DescriptorVector),
}

/// A named similarity measure between two rasters, in `[0, 1]`.
pub trait SimilarityFeature: Send + Sync {
    fn id(&self) -> FeatureId;

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor>;

    /// Must be symmetric in its arguments bit for bit.
    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64>;

    fn similarity(&self, a: &GlyphRaster, b: &GlyphRaster) -> Result<f64> {
        self.compare(&self.describe(a)?, &self.describe(b)?)
    }
}

/// Registered feature extractors, in registration order.
pub struct FeatureRegistry {
    entries: Vec<Box<dyn SimilarityFeature>>,
}

impl FeatureRegistry {
    pub fn empty() -> Self {
        FeatureRegistry { entries: Vec::new() }
    }

    /// All five standard extractors.
    pub fn standard(cfg: &FeatureConfig) -> Self {
        let mut reg = FeatureRegistry::empty();
        reg.register(Box::new(PixelMIoUFeature::new(cfg.binarize)));
        reg.register(Box::new(PHashFeature));
        reg.register(Box::new(HogFeature::new(cfg.hog.clone())));
        reg.register(Box::new(LbpFeature));
        reg.register(Box::new(GaborFeature::new(cfg.gabor.clone())));
        reg
    }

    /// Standard extractors limited to `ids`, kept in canonical order.
    pub fn subset(cfg: &FeatureConfig, ids: &[FeatureId]) -> Self {
        let mut reg = FeatureRegistry::standard(cfg);
        reg.entries.retain(|e| ids.contains(&e.id()));
        reg
    }

    /// Add an extractor, replacing any registered under the same id.
    pub fn register(&mut self, feature: Box<dyn SimilarityFeature>) {
        match self.entries.iter().position(|e| e.id() == feature.id()) {
            Some(i) => self.entries[i] = feature,
            None => self.entries.push(feature),
        }
    }

    pub fn get(&self, id: FeatureId) -> Option<&dyn SimilarityFeature> {
        self.entries.iter().find(|e| e.id() == id).map(|e| &**e)
    }

    pub fn by_name(&self, name: &str) -> Result<&dyn SimilarityFeature> {
        let id: FeatureId = name.parse()?;
        self.get(id).ok_or_else(|| Error::UnknownStrategy {
            kind: "feature",
            name: name.to_string(),
            known: self.ids().iter().map(|i| i.name()).collect::<Vec<_>>().join(", "),
        })
    }

    pub fn ids(&self) -> Vec<FeatureId> {
        self.entries.iter().map(|e| e.id()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn SimilarityFeature> {
        self.entries.iter().map(|e| &**e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Cosine clamped to `[0, 1]`; two zero vectors are identical (1), a zero
/// vector against anything else is unrelated (0).
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    match (aa == 0.0, bb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        // sqrt(fl(x·x)) == |x|, so identical inputs give exactly 1.
        _ => (dot / (aa * bb).sqrt()).clamp(0.0, 1.0),
    }
}

pub(crate) fn vector_pair<'a>(
    id: FeatureId,
    a: &'a Descriptor,
    b: &'a Descriptor,
) -> Result<(&'a DescriptorVector, &'a DescriptorVector)> {
    match (a, b) {
        (Descriptor::Vector(x), Descriptor::Vector(y)) if x.feature == id && y.feature == id => {
            if x.source_dims != y.source_dims || x.values.len() != y.values.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{id} descriptors from {:?} and {:?} rasters",
                    x.source_dims, y.source_dims
                )));
            }
            Ok((x, y))
        }
        _ => Err(Error::InvalidParameter(format!(
            "{id} cannot compare foreign descriptors"
        ))),
    }
}

/// `K` font-averaged `N × N` similarity matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSimilarityTensor {
    template_ids: Vec<String>,
    matrices: Vec<(FeatureId, Matrix)>,
}

impl FeatureSimilarityTensor {
    pub fn new(template_ids: Vec<String>, matrices: Vec<(FeatureId, Matrix)>) -> Result<Self> {
        let t = FeatureSimilarityTensor { template_ids, matrices };
        t.validate()?;
        Ok(t)
    }

    /// Symmetric, unit diagonal, entries in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.template_ids.len();
        if self.matrices.is_empty() {
            return Err(Error::InvalidParameter("tensor has no features".into()));
        }
        for (id, m) in &self.matrices {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "{id} matrix is {:?}, expected {n}x{n}",
                    m.shape()
                )));
            }
            for i in 0..n {
                if m[(i, i)] != 1.0 {
                    return Err(Error::InvalidParameter(format!("{id} diagonal at {i}")));
                }
                for j in 0..n {
                    let v = m[(i, j)];
                    if !(0.0..=1.0).contains(&v) || v != m[(j, i)] {
                        return Err(Error::InvalidParameter(format!(
                            "{id} entry ({i}, {j}) = {v} breaks symmetry or range"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn template_ids(&self) -> &[String] {
        &self.template_ids
    }

    pub fn n(&self) -> usize {
        self.template_ids.len()
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn features(&self) -> Vec<FeatureId> {
        self.matrices.iter().map(|(id, _)| *id).collect()
    }

    pub fn matrices(&self) -> &[(FeatureId, Matrix)] {
        &self.matrices
    }

    pub fn get(&self, id: FeatureId) -> Option<&Matrix> {
        self.matrices.iter().find(|(f, _)| *f == id).map(|(_, m)| m)
    }
}

/// Entry `(i, j)` is the mean over fonts of `sim(raster(i, f), raster(j, f))`.
pub fn feature_similarity_matrix(set: &TemplateSet, feature: &dyn SimilarityFeature) -> Result<Matrix> {
    let (n, fonts) = (set.num_templates(), set.num_fonts());
    let descriptors = set
        .rasters()
        .iter()
        .map(|r| feature.describe(r))
        .collect::<Result<Vec<_>>>()?;
    let cell = |t: usize, f: usize| &descriptors[t * fonts + f];

    let mut m = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let mut sum = 0.0;
            for f in 0..fonts {
                sum += feature.compare(cell(i, f), cell(j, f))?;
            }
            let mean = sum / fonts as f64;
            m[(i, j)] = mean;
            m[(j, i)] = mean;
        }
    }
    Ok(m)
}

/// Run every registered feature over the template set.
pub fn build_tensor(set: &TemplateSet, registry: &FeatureRegistry) -> Result<FeatureSimilarityTensor> {
    let matrices = registry
        .iter()
        .map(|f| Ok((f.id(), feature_similarity_matrix(set, f)?)))
        .collect::<Result<Vec<_>>>()?;
    FeatureSimilarityTensor::new(set.template_ids().to_vec(), matrices)
}
