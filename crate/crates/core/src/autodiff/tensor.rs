use std::fmt;

use crate::scalar::Scalar;

use super::AutodiffError;

/// Dense row-major array of scalars.
///
/// Every constructor rejects non-finite values, so a `Tensor` in hand is
/// always finite. The shape is fixed once built.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite(format!(
                "constructor: element {} is {}",
                pos, data[pos]
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Result<Self, AutodiffError> {
        Self::new(vec![], vec![value])
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AutodiffError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AutodiffError::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), AutodiffError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(AutodiffError::Shape(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let (_, c) = self.dims2().expect("row() on a matrix");
        &self.data[i * c..(i + 1) * c]
    }

    /// Mutable access to the raw buffer; the caller keeps values finite.
    ///
    /// Used by optimizers and weight clipping, which update parameters in place.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self, AutodiffError> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Result<Self, AutodiffError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Plain (untracked) matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self, AutodiffError> {
        matmul_raw(self, false, other, false)
    }

    pub fn convert<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?}[", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", …")?;
        }
        write!(f, "]")
    }
}

/// `op(a) · op(b)` where `op` optionally transposes a matrix.
pub(crate) fn matmul_raw<T: Scalar>(
    a: &Tensor<T>,
    trans_a: bool,
    b: &Tensor<T>,
    trans_b: bool,
) -> Result<Tensor<T>, AutodiffError> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, k, a_strides) = if trans_a {
        (ac, ar, (1, ac as isize))
    } else {
        (ar, ac, (ac as isize, 1))
    };
    let (k2, n, b_strides) = if trans_b {
        (bc, br, (1, bc as isize))
    } else {
        (br, bc, (bc as isize, 1))
    };
    if k != k2 {
        return Err(AutodiffError::Shape(format!(
            "matmul inner dims disagree: {:?}{} · {:?}{}",
            a.shape,
            if trans_a { "ᵀ" } else { "" },
            b.shape,
            if trans_b { "ᵀ" } else { "" },
        )));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, &a.data, a_strides, &b.data, b_strides, T::zero(), &mut out);
    finite_or(vec![m, n], out, "matmul")
}

pub(crate) fn finite_or<T: Scalar>(shape: Vec<usize>, data: Vec<T>, op: &str) -> Result<Tensor<T>, AutodiffError> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(AutodiffError::NonFinite(format!(
            "{op}: element {pos} is {}",
            data[pos]
        )));
    }
    Ok(Tensor { shape, data })
}
