//! Small dense linear algebra: a cyclic Jacobi eigensolver for symmetric
//! matrices and the spectral norm built on it.

use crate::autodiff::{matmul_raw, Tensor};
use crate::scalar::Scalar;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    /// Sorted descending.
    pub values: Vec<T>,
    /// Column `i` (row-major `n×n`) is the unit eigenvector for `values[i]`.
    pub vectors: Vec<T>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on a row-major symmetric `n×n` matrix.
///
/// Only the upper triangle is read. Converges when the off-diagonal mass is
/// below machine precision relative to the diagonal.
pub fn symmetric_eigen<T: Scalar>(matrix: &[T], n: usize) -> SymmetricEigen<T> {
    assert_eq!(matrix.len(), n * n, "symmetric_eigen: buffer is not n×n");
    let mut a = matrix.to_vec();
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let eps = T::epsilon();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + a[i * n + i] * a[i * n + i];
            for j in i + 1..n {
                off = off + a[i * n + j] * a[i * n + j];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Largest singular value of a matrix, from the smaller of its two Gram matrices.
pub fn spectral_norm<T: Scalar>(w: &Tensor<T>) -> T {
    let (r, c) = w.dims2().expect("spectral_norm of a matrix");
    if r == 0 || c == 0 {
        return T::zero();
    }
    let (gram, n) = if r <= c {
        (matmul_raw(w, false, w, true).expect("gram"), r)
    } else {
        (matmul_raw(w, true, w, false).expect("gram"), c)
    };
    let top = symmetric_eigen(gram.data(), n).values[0];
    top.max(T::zero()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_already_solved() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0], 3);
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let e = symmetric_eigen(&[2.0f64, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let (x, y) = (e.vectors[0], e.vectors[2]);
        assert!((x.abs() - 0.5f64.sqrt()).abs() < 1e-14 && (x - y).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_matrix() {
        let n = 6;
        let mut m = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = ((i * 7 + j * 3) as f64).sin() + ((j * 7 + i * 3) as f64).sin();
            }
        }
        let e = symmetric_eigen(&m, n);
        for i in 0..n {
            for j in 0..n {
                let rec: f64 = (0..n)
                    .map(|k| e.vectors[i * n + k] * e.values[k] * e.vectors[j * n + k])
                    .sum();
                assert!((rec - m[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_of_rank_one_sign_matrix() {
        // c·s tᵀ with ±1 entries has norm c·√(rows·cols)
        let rows = 4;
        let cols = 9;
        let data: Vec<f64> = (0..rows * cols)
            .map(|k| {
                let (i, j) = (k / cols, k % cols);
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                let t = if j % 3 == 0 { -1.0 } else { 1.0 };
                0.1 * s * t
            })
            .collect();
        let w = Tensor::new(vec![rows, cols], data).unwrap();
        let want = 0.1 * ((rows * cols) as f64).sqrt();
        assert!((spectral_norm(&w) - want).abs() < 1e-12);
        assert!((spectral_norm(&w.transpose().unwrap()) - want).abs() < 1e-12);
    }
}
