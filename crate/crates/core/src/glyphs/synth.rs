//! Deterministic stand-in for rendered font templates.
//!
//! Every glyph is a union of axis-aligned stroke rectangles taken from a
//! seeded pool. Template `t` uses pool strokes `k..k+3` when `t = 2k` and
//! `k..k+4` when `t = 2k + 1`, so consecutive templates differ by exactly one
//! stroke, while templates far apart in id share none. Each font jitters the
//! position and thickness of every pool stroke the same way in every
//! template.

use super::{GlyphRaster, TemplateSet};
use crate::error::{Error, Result};
use crate::numeric::Prng;

const BASE_STROKES: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Stroke {
    horizontal: bool,
    /// Centre of the bar across its length.
    across: f64,
    start: f64,
    len: f64,
}

#[derive(Debug, Clone, Copy)]
struct Jitter {
    dx: i64,
    dy: i64,
    thickness: i64,
}

/// Pool-stroke indices used by template `t`.
pub fn template_strokes(t: usize) -> std::ops::Range<usize> {
    let k = t / 2;
    let extra = t % 2;
    k..k + BASE_STROKES + extra
}

pub fn synth_template_set(seed: u64, n: usize, f: usize, side: usize) -> Result<TemplateSet> {
    if n < 2 {
        return Err(Error::TooFewTemplates);
    }
    if f == 0 {
        return Err(Error::InvalidParameter("need at least one font".into()));
    }
    if side < 16 {
        return Err(Error::InvalidParameter(format!(
            "synthetic glyphs need side >= 16, got {side}"
        )));
    }
    let pool_len = template_strokes(n - 1).end;
    let s = side as f64;
    let margin = s / 8.0;

    let mut rng = Prng::derived(seed, 0);
    let pool: Vec<Stroke> = (0..pool_len)
        .map(|k| {
            let len = rng.range(0.35, 0.65) * s;
            let start = rng.range(margin, (s - margin - len).max(margin + 1.0));
            Stroke {
                horizontal: k % 2 == 0,
                across: rng.range(margin, s - margin),
                start,
                len,
            }
        })
        .collect();

    let base_thickness = (side / 12).max(2) as i64;
    let max_shift = (side / 32).max(1) as i64;
    let max_thick = (base_thickness / 4).max(1);
    let jitters: Vec<Vec<Jitter>> = (0..f)
        .map(|font| {
            let mut rng = Prng::derived(seed, 1 + font as u64);
            (0..pool_len)
                .map(|_| {
                    let mut pick = |m: i64| rng.below((2 * m + 1) as usize) as i64 - m;
                    Jitter {
                        dx: pick(max_shift),
                        dy: pick(max_shift),
                        thickness: pick(max_thick),
                    }
                })
                .collect()
        })
        .collect();

    let mut rasters = Vec::with_capacity(n * f);
    for t in 0..n {
        for jitter in &jitters {
            let mut pixels = vec![255u8; side * side];
            for k in template_strokes(t) {
                let (x0, y0, x1, y1) = stroke_rect(&pool[k], &jitter[k], base_thickness, side);
                for y in y0..y1 {
                    pixels[y * side + x0..y * side + x1].fill(0);
                }
            }
            rasters.push(GlyphRaster::new(side, side, pixels)?);
        }
    }
    let template_ids = (0..n).map(|t| format!("T{t:03}")).collect();
    let font_ids = (0..f).map(|i| format!("F{i}")).collect();
    TemplateSet::new(template_ids, font_ids, rasters)
}

/// Half-open pixel rectangle `(x0, y0, x1, y1)`, clipped to the raster.
fn stroke_rect(stroke: &Stroke, jitter: &Jitter, base_thickness: i64, side: usize) -> (usize, usize, usize, usize) {
    let thickness = (base_thickness + jitter.thickness).max(1);
    let across0 = stroke.across.round() as i64 - thickness / 2;
    let along0 = stroke.start.round() as i64;
    let along1 = (stroke.start + stroke.len).round() as i64;
    let (x0, x1, y0, y1) = if stroke.horizontal {
        (along0, along1, across0, across0 + thickness)
    } else {
        (across0, across0 + thickness, along0, along1)
    };
    let clip = |v: i64| v.clamp(0, side as i64) as usize;
    (
        clip(x0 + jitter.dx),
        clip(y0 + jitter.dy),
        clip(x1 + jitter.dx),
        clip(y1 + jitter.dy),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_templates_differ_by_one_stroke() {
        for t in 0..20 {
            let a: Vec<_> = template_strokes(t).collect();
            let b: Vec<_> = template_strokes(t + 1).collect();
            let sym_diff = a.iter().filter(|k| !b.contains(k)).count() + b.iter().filter(|k| !a.contains(k)).count();
            assert_eq!(sym_diff, 1, "templates {t} and {}", t + 1);
        }
    }

    #[test]
    fn far_templates_share_no_strokes() {
        let a = template_strokes(0);
        let b = template_strokes(7);
        assert!(a.end <= b.start);
    }

    #[test]
    fn shape_and_ids() {
        let set = synth_template_set(1, 4, 3, 32).unwrap();
        assert_eq!(set.rasters().len(), 12);
        assert_eq!(set.template_ids()[3], "T003");
        assert_eq!(set.font_ids(), &["F0", "F1", "F2"]);
    }

    #[test]
    fn parameter_checks() {
        assert!(matches!(synth_template_set(1, 1, 1, 32), Err(Error::TooFewTemplates)));
        assert!(synth_template_set(1, 3, 0, 32).is_err());
        assert!(synth_template_set(1, 3, 1, 8).is_err());
    }
}
