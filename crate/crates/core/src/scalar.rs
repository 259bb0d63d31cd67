//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the math is generic over: `f32` or `f64`.
///
/// Besides the usual float arithmetic the trait carries a dense GEMM kernel
/// so the tensor code can stay generic while still hitting a tuned inner loop.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// `c = a · b + beta · c` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
    ///
    /// Strides are given in elements so transposed views can be passed without copying.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    /// Lossless-enough conversion from a literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n, "gemm output buffer too small");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    for v in c[..m * n].iter_mut() {
                        *v *= beta;
                    }
                    return;
                }
                // SAFETY: the strides describe in-bounds views of `a` and `b`
                // (checked by the callers in `tensor`), and `c` is an
                // exclusively borrowed dense m×n buffer.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_and_transposed_view() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.5).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let mut c = vec![0.0; 8];
        f64::gemm(2, 3, 4, &a, (3, 1), &b, (4, 1), 0.0, &mut c);
        for (x, y) in c.iter().zip(naive(2, 3, 4, &a, &b)) {
            assert!((x - y).abs() < 1e-14);
        }

        // aᵀ viewed from a 3×2 buffer
        let at = [a[0], a[3], a[1], a[4], a[2], a[5]];
        let mut c2 = vec![0.0; 8];
        f64::gemm(2, 3, 4, &at, (1, 2), &b, (4, 1), 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn gemm_with_empty_inner_dim_scales_output() {
        let mut c = vec![2.0f32; 4];
        f32::gemm(2, 0, 2, &[], (0, 1), &[], (2, 1), 0.5, &mut c);
        assert_eq!(c, vec![1.0; 4]);
    }
}
