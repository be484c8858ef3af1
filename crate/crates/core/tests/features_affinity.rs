use proptest::prelude::*;
use tiloss::affinity::{fuse_tensor, prior_margin_table, MarginOptions};
use tiloss::features::{build_tensor, phash, FeatureConfig, FeatureId, FeatureRegistry};
use tiloss::glyphs::{synth_template_set, template_strokes, GlyphRaster};
use tiloss::numeric::{Matrix, Prng};

/// Rectangles of ink over a noisy background.
fn random_raster(rng: &mut Prng, w: usize, h: usize) -> GlyphRaster {
    let mut px: Vec<u8> = (0..w * h).map(|_| rng.below(40) as u8).collect();
    for _ in 0..1 + rng.below(4) {
        let (x0, y0) = (rng.below(w), rng.below(h));
        let (x1, y1) = ((x0 + 2 + rng.below(w / 2)).min(w), (y0 + 2 + rng.below(h / 2)).min(h));
        let ink = 150 + rng.below(106) as u8;
        for y in y0..y1 {
            for x in x0..x1 {
                px[y * w + x] = ink;
            }
        }
    }
    GlyphRaster::new(w, h, px).unwrap()
}

fn registry() -> FeatureRegistry {
    FeatureRegistry::standard(&FeatureConfig::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn similarities_are_symmetric_bounded_and_reflexive(seed in any::<u64>(), w in 16usize..48, h in 16usize..48) {
        let mut rng = Prng::new(seed);
        let a = random_raster(&mut rng, w, h);
        let b = random_raster(&mut rng, w, h);
        for f in registry().iter() {
            let ab = f.similarity(&a, &b).unwrap();
            let ba = f.similarity(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits(), "{} not symmetric", f.id());
            prop_assert!((0.0..=1.0).contains(&ab), "{} = {}", f.id(), ab);
            prop_assert_eq!(f.similarity(&a, &a).unwrap(), 1.0, "{} self", f.id());
        }
    }
}

/// Orthonormal DCT-II by the defining double sum.
fn direct_dct(m: &Matrix) -> Matrix {
    let n = m.rows();
    let alpha = |k: usize| {
        if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    };
    let basis = |k: usize, x: usize| (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64).cos();
    Matrix::from_fn(n, n, |u, v| {
        let mut s = 0.0;
        for x in 0..n {
            for y in 0..n {
                s += m[(x, y)] * basis(u, x) * basis(v, y);
            }
        }
        alpha(u) * alpha(v) * s
    })
}

fn phash_oracle(r: &GlyphRaster) -> u64 {
    let c = direct_dct(&r.resample(32, 32));
    let block: Vec<f64> = (0..64).map(|i| c[(i / 8, i % 8)]).collect();
    let mut ac = block[1..].to_vec();
    ac.sort_by(f64::total_cmp);
    let median = ac[31];
    (1..64).filter(|&i| block[i] > median).fold(0, |h, i| h | 1 << i)
}

#[test]
fn phash_matches_direct_dct() {
    let mut rng = Prng::new(17);
    for _ in 0..20 {
        let r = random_raster(&mut rng, 40, 36);
        assert_eq!(phash(&r), phash_oracle(&r));
    }
}

#[test]
fn tensor_matches_brute_force() {
    let set = synth_template_set(3, 5, 2, 48).unwrap();
    let reg = registry();
    let tensor = build_tensor(&set, &reg).unwrap();
    assert_eq!(tensor.k(), 5);
    for f in reg.iter() {
        let m = tensor.get(f.id()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mean = (0..2)
                    .map(|font| f.similarity(set.raster(i, font), set.raster(j, font)).unwrap())
                    .sum::<f64>()
                    / 2.0;
                assert!((m[(i, j)] - mean).abs() < 1e-12, "{} ({i}, {j})", f.id());
            }
        }
    }
}

#[test]
fn single_feature_fusion_is_normalized_rows() {
    let set = synth_template_set(7, 8, 3, 96).unwrap();
    let reg = FeatureRegistry::subset(&FeatureConfig::default(), &[FeatureId::Hog]);
    let tensor = build_tensor(&set, &reg).unwrap();
    let hog = tensor.get(FeatureId::Hog).unwrap();
    let n = 8;
    // With one feature the principal right singular vector is the row itself, normalized.
    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let norm = hog.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            hog.row(i).iter().map(|v| v / norm).collect()
        })
        .collect();
    let sym = |i: usize, j: usize| (h[i][j] + h[j][i]) / 2.0;
    let a = fuse_tensor(&tensor).unwrap();
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j {
                1.0
            } else {
                sym(i, j) / (sym(i, i) * sym(j, j)).sqrt()
            };
            assert!((a.get(i, j) - expected).abs() < 1e-10);
        }
    }
}

#[test]
fn one_stroke_pairs_get_the_largest_margins() {
    let set = synth_template_set(7, 8, 3, 96).unwrap();
    let a = fuse_tensor(&build_tensor(&set, &registry()).unwrap()).unwrap();
    let m = prior_margin_table(&a, MarginOptions::default());
    let shared = |i: usize, j: usize| {
        let (x, y) = (template_strokes(i), template_strokes(j));
        x.filter(|k| y.contains(k)).count()
    };
    let mut near = f64::INFINITY;
    let mut far = f64::NEG_INFINITY;
    for i in 0..8 {
        for j in 0..8 {
            if i == j {
                assert_eq!(m.get(i, i), 0.0);
                continue;
            }
            assert!(m.get(i, j) > 0.0);
            if i.abs_diff(j) == 1 {
                near = near.min(m.get(i, j));
            } else if shared(i, j) == 0 {
                far = far.max(m.get(i, j));
            }
        }
    }
    assert!(near > far, "one-stroke minimum {near} vs disjoint maximum {far}");
}

#[test]
fn margin_rows_follow_the_softmax_of_affinities() {
    let set = synth_template_set(1, 4, 2, 64).unwrap();
    let a = fuse_tensor(&build_tensor(&set, &registry()).unwrap()).unwrap();
    let m = prior_margin_table(&a, MarginOptions::default());
    for i in 0..4 {
        let denom: f64 = (0..4).map(|j| a.get(i, j).exp()).sum();
        for j in (0..4).filter(|&j| j != i) {
            assert!((m.get(i, j) - a.get(i, j).exp() / denom).abs() < 1e-12);
        }
    }
}
