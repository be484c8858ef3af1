//! Numerical kernels shared by the rest of the crate.

mod dct;
mod matrix;
mod prng;
mod svd;

pub use dct::{dct2, idct2};
pub use matrix::Matrix;
pub use prng::Prng;
pub use svd::{svd, Svd, MAX_SVD_DIM};

use crate::error::{Error, Result};

/// `log(sum(exp(v)))`, shifted by the maximum so it never overflows.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(lse(values.iter().copied()))
}

/// Unchecked log-sum-exp over an iterator; `-inf` when empty.
pub(crate) fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Angle between two vectors, `2·atan2(|â - b̂|, |â + b̂|)`.
///
/// Stable at both ends of `[0, π]`, unlike `acos` of the dot product.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, w) = (x / na, y / nb);
        diff += (u - w) * (u - w);
        sum += (u + w) * (u + w);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_values() {
        assert_eq!(log_sum_exp(&[3.5]).unwrap(), 3.5);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(log_sum_exp(&[]), Err(Error::EmptyInput)));
        // No overflow for large arguments.
        let big = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((big - 1000.0 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn angles() {
        assert_eq!(angle_between(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        let right = angle_between(&[1.0, 0.0], &[0.0, 2.0]);
        assert!((right - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let opposite = angle_between(&[1.0, 0.0], &[-3.0, 0.0]);
        assert!((opposite - std::f64::consts::PI).abs() < 1e-15);
    }
}
