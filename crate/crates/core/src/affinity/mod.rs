//! Fusion of per-feature similarities into a template affinity matrix and
//! the class-pair prior margins derived from it.
//!
//! For template `i` the directional similarity matrix `S^i` is `K × N`
//! (feature rows, template columns). Its principal right singular vector is
//! an `N`-vector scoring how close every template is to `i` across all
//! features at once. Stacking those vectors as rows gives `H`; the affinity
//! is `(H + Hᵀ)/2` rescaled to a unit diagonal, and each row of affinities is
//! pushed through a softmax to produce the prior margins.

mod cache;

use serde::{Deserialize, Serialize};

pub use cache::{read_margin_cache, write_margin_cache, MARGIN_CACHE_MAGIC, MARGIN_CACHE_VERSION};

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureSimilarityTensor};
use crate::numeric::{lse, svd, Matrix};

/// Singular-vector entries this close to zero from below are clamped.
const NEGATIVE_NOISE: f64 = 1e-10;

/// Similarities of template `i` to every template, one row per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSimilarity {
    pub template: usize,
    pub features: Vec<FeatureId>,
    /// `K × N`.
    pub matrix: Matrix,
}

pub fn directional_similarity(tensor: &FeatureSimilarityTensor, i: usize) -> Result<DirectionalSimilarity> {
    let n = tensor.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let rows: Vec<Vec<f64>> = tensor.matrices().iter().map(|(_, m)| m.row(i).to_vec()).collect();
    Ok(DirectionalSimilarity {
        template: i,
        features: tensor.features(),
        matrix: Matrix::from_rows(&rows)?,
    })
}

/// Unit right singular vector of the largest singular value, oriented to a
/// nonnegative entry sum.
pub fn principal_similarity_vector(s: &DirectionalSimilarity) -> Result<Vec<f64>> {
    if s.matrix.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSimilarity(s.template));
    }
    let dec = svd(&s.matrix)?;
    let mut v = dec.v.column(0);
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    for x in &mut v {
        if *x < 0.0 && *x > -NEGATIVE_NOISE {
            *x = 0.0;
        }
    }
    Ok(v)
}

/// Symmetric template affinity with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    matrix: Matrix,
}

impl AffinityMatrix {
    /// Validates symmetry (1e-12), unit diagonal and `[0, 1]` off-diagonals.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::DimensionMismatch("affinity must be square".into()));
        }
        if matrix.asymmetry() > 1e-12 {
            return Err(Error::InvalidParameter("affinity is not symmetric".into()));
        }
        for i in 0..n {
            if (matrix[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("affinity diagonal at {i}")));
            }
            for j in 0..n {
                if i != j && !(0.0..=1.0).contains(&matrix[(i, j)]) {
                    return Err(Error::InvalidParameter(format!(
                        "affinity ({i}, {j}) = {} outside [0, 1]",
                        matrix[(i, j)]
                    )));
                }
            }
        }
        Ok(AffinityMatrix { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// `A' = (H + Hᵀ)/2` with `H` row `i` = `vectors[i]`, then
/// `A[i][j] = A'[i][j] / sqrt(A'[i][i]·A'[j][j])`.
pub fn assemble_affinity(vectors: &[Vec<f64>]) -> Result<AffinityMatrix> {
    let n = vectors.len();
    if let Some(bad) = vectors.iter().position(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "similarity vector {bad} has length {}, expected {n}",
            vectors[bad].len()
        )));
    }
    let sym = Matrix::from_fn(n, n, |i, j| (vectors[i][j] + vectors[j][i]) / 2.0);
    if let Some(i) = (0..n).find(|&i| sym[(i, i)] <= 0.0) {
        return Err(Error::DegenerateSelfAffinity(i));
    }
    let diag: Vec<f64> = (0..n).map(|i| sym[(i, i)]).collect();
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            // Product in index order so (i, j) and (j, i) round identically.
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            (sym[(i, j)] / (diag[lo] * diag[hi]).sqrt()).clamp(0.0, 1.0)
        }
    });
    AffinityMatrix::new(a)
}

/// Fuse every feature of the tensor into the affinity matrix.
pub fn fuse_tensor(tensor: &FeatureSimilarityTensor) -> Result<AffinityMatrix> {
    let vectors = (0..tensor.n())
        .map(|i| principal_similarity_vector(&directional_similarity(tensor, i)?))
        .collect::<Result<Vec<_>>>()?;
    assemble_affinity(&vectors)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginOptions {
    /// Leave `a_ii` out of the softmax denominator.
    pub exclude_diagonal_in_softmax: bool,
}

/// Class-pair prior margins: zero diagonal, positive elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMarginTable {
    matrix: Matrix,
}

impl PriorMarginTable {
    /// Accepts any square, finite, nonnegative matrix with a zero diagonal.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::DimensionMismatch("margin table must be square".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("margin table"));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "margin table diagonal at {i} is {}",
                    matrix[(i, i)]
                )));
            }
            if matrix.row(i).iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!("negative margin in row {i}")));
            }
        }
        Ok(PriorMarginTable { matrix })
    }

    /// All-zero table (no prior margins).
    pub fn zeros(n: usize) -> Self {
        PriorMarginTable {
            matrix: Matrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// `m(i, j) = exp(a_ij) / Σ_l exp(a_il)` for `j ≠ i`, zero on the diagonal.
pub fn prior_margin_table(a: &AffinityMatrix, opts: MarginOptions) -> PriorMarginTable {
    let n = a.n();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let row = a.matrix().row(i);
        let denom = if opts.exclude_diagonal_in_softmax {
            lse(row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v))
        } else {
            lse(row.iter().copied())
        };
        for j in 0..n {
            if j != i {
                m[(i, j)] = (row[j] - denom).exp();
            }
        }
    }
    PriorMarginTable { matrix: m }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_assembly() {
        let a = assemble_affinity(&[vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let expected = 0.3 / 0.48_f64.sqrt();
        assert!((a.get(0, 1) - expected).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.4330127).abs() < 1e-7);
        assert_eq!(a.get(1, 0), a.get(0, 1));
        assert_eq!((a.get(0, 0), a.get(1, 1)), (1.0, 1.0));
    }

    #[test]
    fn symmetric_unit_input_is_unchanged() {
        let h = vec![vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.5], vec![0.1, 0.5, 1.0]];
        let a = assemble_affinity(&h).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), h[i][j]);
            }
        }
    }

    #[test]
    fn nonpositive_self_affinity_names_template() {
        let h = vec![vec![1.0, 0.2], vec![0.2, 0.0]];
        assert!(matches!(assemble_affinity(&h), Err(Error::DegenerateSelfAffinity(1))));
    }

    #[test]
    fn literal_and_excluded_softmax() {
        let a = AffinityMatrix::new(Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap()).unwrap();
        let m = prior_margin_table(&a, MarginOptions::default());
        let expected = 0.5_f64.exp() / (1.0_f64.exp() + 0.5_f64.exp());
        assert!((m.get(0, 1) - expected).abs() < 1e-15);
        assert!((m.get(0, 1) - 0.37754).abs() < 1e-5);
        assert_eq!(m.get(0, 0), 0.0);
        let ex = prior_margin_table(
            &a,
            MarginOptions {
                exclude_diagonal_in_softmax: true,
            },
        );
        assert!((ex.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn principal_vector_rank_one() {
        let s = DirectionalSimilarity {
            template: 0,
            features: vec![FeatureId::Hog],
            matrix: Matrix::from_rows(&[vec![1.0, 0.5, 0.25]]).unwrap(),
        };
        let v = principal_similarity_vector(&s).unwrap();
        let norm = (1.0f64 + 0.25 + 0.0625).sqrt();
        for (x, e) in v.iter().zip([1.0, 0.5, 0.25]) {
            assert!((x - e / norm).abs() < 1e-14);
        }
    }

    #[test]
    fn all_zero_directional_matrix_is_degenerate() {
        let s = DirectionalSimilarity {
            template: 3,
            features: vec![FeatureId::Hog],
            matrix: Matrix::zeros(1, 4),
        };
        assert!(matches!(
            principal_similarity_vector(&s),
            Err(Error::DegenerateSimilarity(3))
        ));
    }

    #[test]
    fn margin_table_validation() {
        assert!(PriorMarginTable::new(Matrix::identity(2)).is_err());
        assert!(PriorMarginTable::new(Matrix::zeros(2, 3)).is_err());
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = -0.1;
        assert!(PriorMarginTable::new(m).is_err());
    }
}
