//! Gabor filter bank texture descriptor.
//!
//! The raster is resampled to a fixed working size and its mean is removed.
//! Each (scale, orientation) kernel is a complex Gabor with its Gaussian-weighted
//! mean subtracted (zero DC) and unit L2 energy. The descriptor is the mean
//! response magnitude per channel, scale-major.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{clamped_cosine, vector_pair, Descriptor, DescriptorVector, FeatureId, SimilarityFeature};
use crate::error::Result;
use crate::glyphs::GlyphRaster;
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborConfig {
    /// Rasters are resampled to `work_side × work_side` first.
    pub work_side: usize,
    pub scales: usize,
    pub orientations: usize,
    /// Carrier wavelength of the finest scale, in working pixels.
    pub min_wavelength: f64,
    /// Wavelength ratio between consecutive scales.
    pub scale_ratio: f64,
    /// Gaussian sigma as a multiple of the wavelength.
    pub sigma_per_wavelength: f64,
    /// Envelope aspect ratio across the carrier.
    pub aspect: f64,
    /// Kernel radius in sigmas.
    pub radius_sigmas: f64,
}

impl Default for GaborConfig {
    fn default() -> Self {
        GaborConfig {
            work_side: 32,
            scales: 4,
            orientations: 6,
            min_wavelength: 3.0,
            scale_ratio: 1.5,
            sigma_per_wavelength: 0.56,
            aspect: 0.5,
            radius_sigmas: 2.0,
        }
    }
}

struct Kernel {
    radius: isize,
    side: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Kernel {
    fn new(cfg: &GaborConfig, wavelength: f64, theta: f64) -> Self {
        let sigma = cfg.sigma_per_wavelength * wavelength;
        let radius = (cfg.radius_sigmas * sigma).ceil().max(1.0) as isize;
        let side = (2 * radius + 1) as usize;
        let (sin_t, cos_t) = theta.sin_cos();
        let mut env = Vec::with_capacity(side * side);
        let mut re = Vec::with_capacity(side * side);
        let mut im = Vec::with_capacity(side * side);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (x, y) = (dx as f64, dy as f64);
                let along = x * cos_t + y * sin_t;
                let across = -x * sin_t + y * cos_t;
                let g = (-(along * along + cfg.aspect * cfg.aspect * across * across) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * PI * along / wavelength;
                env.push(g);
                re.push(g * phase.cos());
                im.push(g * phase.sin());
            }
        }
        let env_sum: f64 = env.iter().sum();
        for part in [&mut re, &mut im] {
            let offset = part.iter().sum::<f64>() / env_sum;
            for (v, g) in part.iter_mut().zip(&env) {
                *v -= offset * g;
            }
        }
        let energy = re.iter().chain(&im).map(|v| v * v).sum::<f64>().sqrt();
        for v in re.iter_mut().chain(im.iter_mut()) {
            *v /= energy;
        }
        Kernel { radius, side, re, im }
    }
}

pub struct GaborFeature {
    cfg: GaborConfig,
    bank: Vec<Kernel>,
}

impl std::fmt::Debug for GaborFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborFeature").field("cfg", &self.cfg).finish()
    }
}

impl GaborFeature {
    pub fn new(cfg: GaborConfig) -> Self {
        let mut bank = Vec::with_capacity(cfg.scales * cfg.orientations);
        for s in 0..cfg.scales {
            let wavelength = cfg.min_wavelength * cfg.scale_ratio.powi(s as i32);
            for o in 0..cfg.orientations {
                let theta = PI * o as f64 / cfg.orientations as f64;
                bank.push(Kernel::new(&cfg, wavelength, theta));
            }
        }
        GaborFeature { cfg, bank }
    }

    pub fn channels(&self) -> usize {
        self.bank.len()
    }

    pub fn descriptor(&self, raster: &GlyphRaster) -> Vec<f64> {
        let side = self.cfg.work_side;
        let mut img = raster.resample(side, side);
        let mean = img.as_slice().iter().sum::<f64>() / (side * side) as f64;
        img.as_mut_slice().iter_mut().for_each(|v| *v -= mean);
        self.bank.iter().map(|k| mean_magnitude(&img, k)).collect()
    }
}

/// Mean |response| over the image with replicated borders.
fn mean_magnitude(img: &Matrix, k: &Kernel) -> f64 {
    let (h, w) = img.shape();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for ky in 0..k.side {
                let sy = (y as isize + ky as isize - k.radius).clamp(0, h as isize - 1) as usize;
                let row = img.row(sy);
                let krow = ky * k.side;
                for kx in 0..k.side {
                    let sx = (x as isize + kx as isize - k.radius).clamp(0, w as isize - 1) as usize;
                    let p = row[sx];
                    re += p * k.re[krow + kx];
                    im += p * k.im[krow + kx];
                }
            }
            total += (re * re + im * im).sqrt();
        }
    }
    total / (h * w) as f64
}

impl SimilarityFeature for GaborFeature {
    fn id(&self) -> FeatureId {
        FeatureId::Gabor
    }

    fn describe(&self, raster: &GlyphRaster) -> Result<Descriptor> {
        Ok(Descriptor::Vector(DescriptorVector {
            feature: FeatureId::Gabor,
            values: self.descriptor(raster),
            source_dims: (raster.width(), raster.height()),
        }))
    }

    fn compare(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        let (x, y) = vector_pair(FeatureId::Gabor, a, b)?;
        Ok(clamped_cosine(&x.values, &y.values))
    }
}
