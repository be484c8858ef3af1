//! Labeled image sets: IDX files, synthetic digits and glyph templates.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::glyphs::TemplateSet;
use crate::numeric::Prng;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Flattened images scaled to `[0, 1]` with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    images: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, images: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::InvalidParameter(
                "dataset needs a positive dimension and at least two classes".into(),
            ));
        }
        if images.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} samples of dimension {dim}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        if images.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset images"));
        }
        Ok(Dataset {
            dim,
            classes,
            images,
            labels,
        })
    }

    /// Images as bytes, scaled by `1/255`.
    pub fn from_bytes(dim: usize, classes: usize, pixels: &[u8], labels: Vec<usize>) -> Result<Self> {
        Dataset::new(dim, classes, pixels.iter().map(|&p| p as f64 / 255.0).collect(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        let mut images = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Ok(Dataset {
            dim: self.dim,
            classes: self.classes,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }
}

fn header(bytes: &[u8], magic: u32, dims: usize, path: &Path) -> Result<Vec<usize>> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    let found = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if found != magic {
        return Err(bad(format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    Ok((0..dims)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().expect("4 bytes")) as usize)
        .collect())
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let dims = header(bytes, IDX_IMAGES_MAGIC, 3, path)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    if body.len() != count * rows * cols {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "{count}x{rows}x{cols} images need {} bytes, found {}",
                count * rows * cols,
                body.len()
            ),
        });
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let count = header(bytes, IDX_LABELS_MAGIC, 1, path)?[0];
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{count} labels declared, {} present", body.len()),
        });
    }
    Ok(body.to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(&bytes, path)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_labels(&bytes, path)
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [images.count(), images.rows, images.cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    fs::write(path, encode_idx_images(images)).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_idx_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Reads an image/label IDX pair. `classes` defaults to `max label + 1`.
pub fn load_idx_dataset(images: &Path, labels: &Path, classes: Option<usize>) -> Result<Dataset> {
    let img = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if img.count() != lab.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} labels",
            img.count(),
            lab.len()
        )));
    }
    if lab.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = classes.unwrap_or_else(|| lab.iter().copied().max().map_or(0, |m| m as usize + 1));
    Dataset::from_bytes(
        img.rows * img.cols,
        classes,
        &img.pixels,
        lab.iter().map(|&l| l as usize).collect(),
    )
}

// Segments a..g as (x0, y0, x1, y1) on a 0..=2 by 0..=4 grid.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    (0, 0, 2, 0), // a: top
    (2, 0, 2, 2), // b: upper right
    (2, 2, 2, 4), // c: lower right
    (0, 4, 2, 4), // d: bottom
    (0, 2, 0, 4), // e: lower left
    (0, 0, 0, 2), // f: upper left
    (0, 2, 2, 2), // g: middle
];

const DIGIT_SEGMENTS: [u8; 10] = [
    0b011_1111, // 0: abcdef
    0b000_0110, // 1: bc
    0b101_1011, // 2: abdeg
    0b100_1111, // 3: abcdg
    0b110_0110, // 4: bcfg
    0b110_1101, // 5: acdfg
    0b111_1101, // 6: acdefg
    0b000_0111, // 7: abc
    0b111_1111, // 8
    0b110_1111, // 9: abcdfg
];

/// Minimum side of a synthetic digit image.
pub const MIN_DIGIT_SIDE: usize = 12;

/// Seven-segment digits with random size, position, slant, stroke width,
/// occasional dropped or extra segments and pixel noise. Ink is bright
/// (255) on a dark background, as in MNIST. Labels cycle through 0..9 so
/// classes stay balanced.
pub fn synth_digits(seed: u64, count: usize, side: usize) -> Result<(IdxImages, Vec<u8>)> {
    if side < MIN_DIGIT_SIDE {
        return Err(Error::InvalidParameter(format!(
            "digit side must be at least {MIN_DIGIT_SIDE}, got {side}"
        )));
    }
    let mut rng = Prng::new(seed);
    let mut pixels = vec![0u8; count * side * side];
    let mut labels = Vec::with_capacity(count);
    let s = side as f64;
    for (i, img) in pixels.chunks_exact_mut(side * side).enumerate() {
        let digit = i % 10;
        labels.push(digit as u8);
        let height = rng.range(0.55, 0.8) * s;
        let width = height * rng.range(0.4, 0.65);
        let x0 = rng.range(1.0, s - width - 1.0);
        let y0 = rng.range(1.0, s - height - 1.0);
        let slant = rng.range(-0.25, 0.25);
        let half = rng.range(0.5, 1.2);
        let mut mask = DIGIT_SEGMENTS[digit];
        for bit in 0..7 {
            let flip = if mask & (1 << bit) != 0 { 0.01 } else { 0.005 };
            if rng.uniform() < flip {
                mask ^= 1 << bit;
            }
        }
        let ink = rng.range(160.0, 255.0);
        for (bit, &(gx0, gy0, gx1, gy1)) in SEGMENTS.iter().enumerate() {
            if mask & (1 << bit) == 0 {
                continue;
            }
            let to_px = |gx: usize, gy: usize| {
                let y = y0 + height * gy as f64 / 4.0;
                let x = x0 + width * gx as f64 / 2.0 + slant * (y0 + height - y);
                (x, y)
            };
            let (ax, ay) = to_px(gx0, gy0);
            let (bx, by) = to_px(gx1, gy1);
            for py in 0..side {
                for px in 0..side {
                    let d = segment_distance(px as f64 + 0.5, py as f64 + 0.5, ax, ay, bx, by);
                    let cover = (half + 0.5 - d).clamp(0.0, 1.0);
                    let v = &mut img[py * side + px];
                    *v = (*v).max((cover * ink).round() as u8);
                }
            }
        }
        for v in img.iter_mut() {
            let noisy = *v as f64 + 20.0 * rng.normal();
            *v = noisy.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok((
        IdxImages {
            rows: side,
            cols: side,
            pixels,
        },
        labels,
    ))
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// One sample per (template, font) raster, resized to `side`, with ink
/// mapped to 1. The label is the template index.
pub fn dataset_from_templates(set: &TemplateSet, side: usize) -> Result<Dataset> {
    let mut images = Vec::with_capacity(set.rasters().len() * side * side);
    let mut labels = Vec::with_capacity(set.rasters().len());
    for t in 0..set.num_templates() {
        for f in 0..set.num_fonts() {
            let r = set.raster(t, f).resize(side, side)?;
            images.extend(r.pixels().iter().map(|&p| (255 - p) as f64 / 255.0));
            labels.push(t);
        }
    }
    Dataset::new(side * side, set.num_templates(), images, labels)
}
