use std::f64::consts::PI;

use super::Matrix;

/// Orthonormal DCT-II basis: `basis[(k, x)] = c_k cos(pi (2x + 1) k / 2n)`.
fn dct_basis(n: usize) -> Matrix {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    Matrix::from_fn(n, n, |k, x| {
        let c = if k == 0 { scale0 } else { scale };
        c * (PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// Separable orthonormal type-II 2-D DCT.
pub fn dct2(block: &Matrix) -> Matrix {
    let row_basis = dct_basis(block.rows());
    let col_basis = dct_basis(block.cols());
    // C_r · X · C_cᵀ
    let tmp = row_basis.matmul(block).expect("square basis");
    tmp.matmul(&col_basis.transpose()).expect("square basis")
}

/// Inverse of [`dct2`] (orthonormal type-III).
pub fn idct2(coeffs: &Matrix) -> Matrix {
    let row_basis = dct_basis(coeffs.rows());
    let col_basis = dct_basis(coeffs.cols());
    let tmp = row_basis.transpose().matmul(coeffs).expect("square basis");
    tmp.matmul(&col_basis).expect("square basis")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_has_only_dc() {
        let c = dct2(&Matrix::from_fn(4, 4, |_, _| 2.0));
        assert!((c[(0, 0)] - 8.0).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                if (i, j) != (0, 0) {
                    assert!(c[(i, j)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rectangular_round_trip() {
        let m = Matrix::from_fn(3, 5, |i, j| (i * 7 + j * 3) as f64 % 4.0);
        assert!(idct2(&dct2(&m)).max_abs_diff(&m) < 1e-12);
    }
}
