use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::GlyphRaster;
use crate::error::{Error, Result};

pub const DEFAULT_SIDE: usize = 96;
pub const MANIFEST_NAME: &str = "manifest.tsv";

/// N templates × F fonts of equally sized rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    template_ids: Vec<String>,
    font_ids: Vec<String>,
    side: usize,
    /// Template-major: cell `(t, f)` lives at `t * F + f`.
    rasters: Vec<GlyphRaster>,
}

impl TemplateSet {
    pub fn new(template_ids: Vec<String>, font_ids: Vec<String>, rasters: Vec<GlyphRaster>) -> Result<Self> {
        if template_ids.len() < 2 {
            return Err(Error::TooFewTemplates);
        }
        if font_ids.is_empty() {
            return Err(Error::InvalidParameter("need at least one font".into()));
        }
        if rasters.len() != template_ids.len() * font_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} templates x {} fonts needs {} rasters, got {}",
                template_ids.len(),
                font_ids.len(),
                template_ids.len() * font_ids.len(),
                rasters.len()
            )));
        }
        let side = rasters[0].width();
        if rasters.iter().any(|r| r.width() != side || r.height() != side) {
            return Err(Error::DimensionMismatch(
                "template rasters must share one square size".into(),
            ));
        }
        Ok(TemplateSet {
            template_ids,
            font_ids,
            side,
            rasters,
        })
    }

    pub fn template_ids(&self) -> &[String] {
        &self.template_ids
    }

    pub fn font_ids(&self) -> &[String] {
        &self.font_ids
    }

    pub fn num_templates(&self) -> usize {
        self.template_ids.len()
    }

    pub fn num_fonts(&self) -> usize {
        self.font_ids.len()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn raster(&self, template: usize, font: usize) -> &GlyphRaster {
        &self.rasters[template * self.font_ids.len() + font]
    }

    pub fn rasters(&self) -> &[GlyphRaster] {
        &self.rasters
    }

    /// Write `manifest.tsv` plus one binary PGM per cell into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::from("# template\tfont\tpath\n");
        for (t, tid) in self.template_ids.iter().enumerate() {
            for (f, fid) in self.font_ids.iter().enumerate() {
                let name = format!("t{t:04}_f{f:02}.pgm");
                write_pgm(&dir.join(&name), self.raster(t, f))?;
                manifest.push_str(&format!("{tid}\t{fid}\t{name}\n"));
            }
        }
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub template: String,
    pub font: String,
    pub path: PathBuf,
    /// Light-on-dark raster that must be inverted on load.
    pub invert: bool,
}

/// Parse the tab-separated manifest: `template<TAB>font<TAB>path[<TAB>invert]`.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Manifest { line: idx + 1, message };
        let invert = match fields.len() {
            3 => false,
            4 if fields[3].trim() == "invert" => true,
            4 => return Err(err(format!("unknown flag {:?}", fields[3]))),
            n => return Err(err(format!("expected 3 or 4 tab-separated fields, got {n}"))),
        };
        if fields[..3].iter().any(|f| f.trim().is_empty()) {
            return Err(err("empty field".into()));
        }
        entries.push(ManifestEntry {
            template: fields[0].trim().to_string(),
            font: fields[1].trim().to_string(),
            path: PathBuf::from(fields[2].trim()),
            invert,
        });
    }
    Ok(entries)
}

/// Load every cell listed in `manifest`, resolving paths against `root`, and
/// resize each raster to `side × side`.
///
/// Templates and fonts are ordered by first appearance in the manifest.
pub fn load_template_set(root: &Path, manifest: &Path, side: usize) -> Result<TemplateSet> {
    if side == 0 {
        return Err(Error::InvalidParameter("side must be positive".into()));
    }
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries = parse_manifest(&text)?;

    let mut templates: Vec<String> = Vec::new();
    let mut fonts: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize), &ManifestEntry> = HashMap::new();
    for entry in &entries {
        let t = index_of(&mut templates, &entry.template);
        let f = index_of(&mut fonts, &entry.font);
        if cells.insert((t, f), entry).is_some() {
            return Err(Error::Manifest {
                line: 0,
                message: format!(
                    "duplicate cell for template {:?}, font {:?}",
                    entry.template, entry.font
                ),
            });
        }
    }
    if templates.len() < 2 {
        return Err(Error::TooFewTemplates);
    }

    let mut rasters = Vec::with_capacity(templates.len() * fonts.len());
    for (t, tid) in templates.iter().enumerate() {
        for (f, fid) in fonts.iter().enumerate() {
            let entry = cells.get(&(t, f)).ok_or_else(|| Error::IncompleteGrid {
                template: tid.clone(),
                font: fid.clone(),
            })?;
            let path = root.join(&entry.path);
            if !path.is_file() {
                return Err(Error::IncompleteGrid {
                    template: tid.clone(),
                    font: fid.clone(),
                });
            }
            let mut raster = read_gray_image(&path)?;
            if entry.invert {
                raster = raster.inverted();
            }
            rasters.push(raster.resize(side, side)?);
        }
    }
    TemplateSet::new(templates, fonts, rasters)
}

fn index_of(list: &mut Vec<String>, key: &str) -> usize {
    match list.iter().position(|k| k == key) {
        Some(i) => i,
        None => {
            list.push(key.to_string());
            list.len() - 1
        }
    }
}

/// Decode an 8-bit grayscale PGM (P5) or PNG.
pub fn read_gray_image(path: &Path) -> Result<GlyphRaster> {
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            GlyphRaster::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(decode_err(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, raster: &GlyphRaster) -> Result<()> {
    let mut bytes = Vec::with_capacity(raster.pixels().len() + 32);
    write!(bytes, "P5\n{} {}\n255\n", raster.width(), raster.height()).expect("writing to a Vec cannot fail");
    bytes.extend_from_slice(raster.pixels());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parsing() {
        let text = "# comment\nA\tsong\ta.pgm\n\nB\tkai\tb.png\tinvert\n";
        let entries = parse_manifest(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(!entries[0].invert);
        assert!(entries[1].invert);
        assert_eq!(entries[1].path, PathBuf::from("b.png"));
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        match parse_manifest("A\tsong\n") {
            Err(Error::Manifest { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_manifest("A\tsong\tx.pgm\tbold\n").is_err());
    }
}
