//! One-sided (Hestenes) Jacobi singular value decomposition.
//!
//! Pairs of columns are rotated until they are mutually orthogonal; the
//! column norms are then the singular values. Accurate to a few ulps at
//! the small sizes this crate deals with and bit-stable across platforms
//! because it uses nothing beyond IEEE arithmetic and `sqrt`.

use super::Matrix;
use crate::error::{Error, Result};

/// Largest accepted dimension.
pub const MAX_SVD_DIM: usize = 1024;

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

/// Thin SVD `m = u · diag(sigma) · vᵀ` with `k = min(rows, cols)` columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    /// Singular values, sorted descending.
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.sigma.len();
        let (m, n) = (self.u.rows(), self.v.rows());
        Matrix::from_fn(m, n, |i, j| {
            (0..k).map(|l| self.u[(i, l)] * self.sigma[l] * self.v[(j, l)]).sum()
        })
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows > MAX_SVD_DIM || cols > MAX_SVD_DIM {
        return Err(Error::TooLarge { rows, cols });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch("svd of an empty matrix".into()));
    }
    if rows >= cols {
        Ok(tall_svd(m))
    } else {
        let t = tall_svd(&m.transpose());
        Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

/// SVD for `rows >= cols`.
fn tall_svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    // Columns of the working matrix stored as rows for contiguous access.
    let mut w = m.transpose();
    let mut v = Matrix::identity(cols);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (a, b) in w.row(p).iter().zip(w.row(q)) {
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols)
        .map(|j| w.row(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let tiny = sigma[0] * (rows.max(cols) as f64) * f64::EPSILON;

    let mut u = Matrix::zeros(rows, cols);
    let mut v_sorted = Matrix::zeros(cols, cols);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        for i in 0..cols {
            // `v` rows hold the right singular vectors after the rotations
            // above were applied to rows, so transpose while copying.
            v_sorted[(i, k)] = v[(j, i)];
        }
        if sigma[k] > tiny && sigma[k] > 0.0 {
            for i in 0..rows {
                u[(i, k)] = w[(j, i)] / sigma[k];
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Svd { u, sigma, v: v_sorted }
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fill the listed columns of `u` with unit vectors orthogonal to every
/// other column (modified Gram-Schmidt over the standard basis).
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let rows = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    let mut basis = 0;
    for &col in missing {
        while basis < rows {
            let mut cand = vec![0.0; rows];
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let dot: f64 = (0..rows).map(|i| cand[i] * u[(i, f)]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= dot * u[(i, f)];
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, c) in cand.iter().enumerate() {
                    u[(i, col)] = c / norm;
                }
                filled.push(col);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_singular_values() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted_and_unrotated() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let s = svd(&m).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);
        for (k, &j) in [1usize, 2, 0].iter().enumerate() {
            assert_eq!(s.v[(j, k)].abs(), 1.0);
            assert_eq!(s.u[(j, k)].abs(), 1.0);
        }
    }

    #[test]
    fn rank_deficient_u_is_completed() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let s = svd(&m).unwrap();
        assert!(s.sigma[1].abs() < 1e-12);
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        assert!(utu.max_abs_diff(&Matrix::identity(2)) < 1e-12);
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let s = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        assert!(utu.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_oversized() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
        assert!(matches!(svd(&Matrix::zeros(1025, 1)), Err(Error::TooLarge { .. })));
    }
}
