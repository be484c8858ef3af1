use proptest::prelude::*;
use tiloss::numeric::{dct2, idct2, log_sum_exp, svd, Matrix, Prng};

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn random_matrix(rng: &mut Prng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.range(-1.0, 1.0))
}

fn orthonormality_error(q: &Matrix) -> f64 {
    q.transpose()
        .matmul(q)
        .unwrap()
        .max_abs_diff(&Matrix::identity(q.cols()))
}

#[test]
fn squared_singular_values_match_jacobi_eigenvalues() {
    let mut rng = Prng::new(42);
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 6, 4);
        let dec = svd(&m).unwrap();
        let mut sq: Vec<f64> = dec.sigma.iter().map(|s| s * s).collect();
        sq.reverse();
        let eig = jacobi_eigenvalues(&m.transpose().matmul(&m).unwrap());
        for (a, b) in sq.iter().zip(&eig) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn reconstruction_and_orthonormality() {
    let mut rng = Prng::new(3);
    for (r, c) in [(6, 4), (4, 6), (5, 5), (1, 7), (12, 3)] {
        let m = random_matrix(&mut rng, r, c);
        let dec = svd(&m).unwrap();
        assert!(dec.reconstruct().max_abs_diff(&m) <= 1e-10 * m.max_abs());
        assert!(orthonormality_error(&dec.u) < 1e-10);
        assert!(orthonormality_error(&dec.v) < 1e-10);
        assert!(dec.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(dec.sigma.iter().all(|&s| s >= 0.0));
    }
}

#[test]
fn dct_round_trip_on_random_blocks() {
    let mut rng = Prng::new(8);
    for _ in 0..10 {
        let block = Matrix::from_fn(32, 32, |_, _| rng.range(0.0, 255.0));
        assert!(idct2(&dct2(&block)).max_abs_diff(&block) < 1e-10);
    }
}

#[test]
fn log_sum_exp_values() {
    assert_eq!(log_sum_exp(&[3.5]).unwrap(), 3.5);
    assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!(log_sum_exp(&[]).is_err());
}

fn permutation(rng: &mut Prng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    p
}

proptest! {
    #[test]
    fn singular_values_ignore_row_and_column_permutations(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let mut rng = Prng::new(seed);
        let m = random_matrix(&mut rng, rows, cols);
        let (p, q) = (permutation(&mut rng, rows), permutation(&mut rng, cols));
        let permuted = Matrix::from_fn(rows, cols, |i, j| m[(p[i], q[j])]);
        let (a, b) = (svd(&m).unwrap().sigma, svd(&permuted).unwrap().sigma);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn log_sum_exp_shifts(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let lhs = log_sum_exp(&shifted).unwrap();
        let rhs = log_sum_exp(&v).unwrap() + c;
        prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn prng_streams_repeat(seed in any::<u64>()) {
        let mut a = Prng::new(seed);
        let mut b = Prng::new(seed);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
