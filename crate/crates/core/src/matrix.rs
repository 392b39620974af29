//! Dense row-major matrices and the handful of elementwise kernels the models need.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense matrix stored in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Length {
                op: "Matrix::from_vec",
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Length {
                    op: "Matrix::from_rows",
                    left: cols,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-column matrix.
    pub fn column(values: &[T]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    /// `selfᵀ · x` for a vector `x` of length `rows`; avoids materialising the transpose.
    pub fn t_matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.rows {
            return Err(Error::Shape {
                op: "t_matvec",
                left: (self.cols, self.rows),
                right: (x.len(), 1),
            });
        }
        let mut out = vec![T::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * xr;
            }
        }
        Ok(out)
    }

    /// `self · x` for a vector `x` of length `cols`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::Shape {
                op: "matvec",
                left: self.shape(),
                right: (x.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|r| dot(self.row(r), x))
            .collect())
    }

    /// Accumulates the outer product `scale · x yᵀ` into `self` (`x.len() == rows`, `y.len() == cols`).
    pub fn add_outer(&mut self, x: &[T], y: &[T], scale: T) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            let s = xr * scale;
            if s == T::zero() {
                continue;
            }
            for (o, &yc) in self.row_mut(r).iter_mut().zip(y) {
                *o += s * yc;
            }
        }
    }

    /// Element-type conversion through `f64`.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Standard matrix product.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // i-k-j order keeps the inner loop on contiguous rows of `b` and `out`.
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == T::zero() {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `w · x + b`, with the column vector `b` (w.rows × 1) broadcast over the columns of `x`.
pub fn affine<T: Scalar>(w: &Matrix<T>, x: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if b.cols != 1 || b.rows != w.rows {
        return Err(Error::Shape {
            op: "affine (bias)",
            left: (w.rows, 1),
            right: b.shape(),
        });
    }
    let mut out = matmul(w, x)?;
    for r in 0..out.rows {
        let br = b.data[r];
        out.row_mut(r).iter_mut().for_each(|v| *v += br);
    }
    Ok(out)
}

/// Logistic function, written to avoid overflow for large |x|.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid_scalar)
}

/// Mean of squared differences over all entries.
pub fn mse<T: Scalar>(pred: &Matrix<T>, gold: &Matrix<T>) -> Result<T> {
    pred.same_shape(gold, "mse")?;
    mse_slice(pred.as_slice(), gold.as_slice())
}

pub fn mse_slice<T: Scalar>(pred: &[T], gold: &[T]) -> Result<T> {
    if pred.len() != gold.len() {
        return Err(Error::Length {
            op: "mse",
            left: pred.len(),
            right: gold.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse over zero entries"));
    }
    let sum: T = pred
        .iter()
        .zip(gold)
        .map(|(&p, &g)| (p - g) * (p - g))
        .sum();
    Ok(sum / T::of(pred.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random(rng: &mut Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, rng.gaussian_vec(rows * cols, 0.0, 1.0).unwrap()).unwrap()
    }

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let mut rng = Rng::new(1);
        let m = random(&mut rng, 3, 3);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0], [6.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[17.0, 39.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(2);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive(&a, &b);
        for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn affine_cases() {
        let mut rng = Rng::new(3);
        let x = random(&mut rng, 4, 2);
        let out = affine(&Matrix::identity(4), &x, &Matrix::zeros(4, 1)).unwrap();
        assert_eq!(out, x);

        let c = Matrix::column(&[1.0, -2.0, 3.0]);
        let out = affine(&Matrix::zeros(3, 4), &Matrix::zeros(4, 1), &c).unwrap();
        assert_eq!(out, c);

        let w = random(&mut rng, 3, 4);
        let b = random(&mut rng, 3, 1);
        let out = affine(&w, &x, &b).unwrap();
        let wx = matmul(&w, &x).unwrap();
        let mut tiled = Matrix::zeros(3, 2);
        for r in 0..3 {
            for c in 0..2 {
                tiled[(r, c)] = b[(r, 0)];
            }
        }
        let expected = wx.add(&tiled).unwrap();
        for (p, q) in out.as_slice().iter().zip(expected.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(affine(&w, &x, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((sigmoid_scalar(500.0f64) - 1.0).abs() < 1e-15);
        assert!(sigmoid_scalar(-500.0f64) >= 0.0);
        assert!(sigmoid_scalar(-500.0f64).is_finite());
        let mut rng = Rng::new(4);
        let x = random(&mut rng, 5, 5).map(|v| v * 10.0);
        let s = sigmoid(&x);
        let t = sigmoid(&x.map(|v| -v));
        for (a, b) in s.as_slice().iter().zip(t.as_slice()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_cases() {
        let g = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(mse(&p, &p).unwrap(), 0.0);
        assert_eq!(mse(&p, &g).unwrap(), 1.0);
        assert!(mse(&p, &Matrix::zeros(2, 1)).is_err());

        let mut rng = Rng::new(5);
        let a = random(&mut rng, 4, 6);
        let b = random(&mut rng, 4, 6);
        let mut s = 0.0;
        for r in 0..4 {
            for c in 0..6 {
                s += (a[(r, c)] - b[(r, c)]).powi(2);
            }
        }
        assert!((mse(&a, &b).unwrap() - s / 24.0).abs() < 1e-12);
    }

    #[test]
    fn associativity() {
        let mut rng = Rng::new(6);
        for _ in 0..20 {
            let a = random(&mut rng, 3, 4);
            let b = random(&mut rng, 4, 5);
            let c = random(&mut rng, 5, 2);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matvec_variants_agree_with_matmul() {
        let mut rng = Rng::new(7);
        let m = random(&mut rng, 6, 4);
        let x = rng.gaussian_vec(6, 0.0, 1.0).unwrap();
        let y = rng.gaussian_vec(4, 0.0, 1.0).unwrap();
        let tx = m.t_matvec(&x).unwrap();
        let oracle = matmul(&m.transpose(), &Matrix::column(&x)).unwrap();
        for (a, b) in tx.iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let my = m.matvec(&y).unwrap();
        let oracle = matmul(&m, &Matrix::column(&y)).unwrap();
        for (a, b) in my.iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_matmul() {
        let a = Matrix::<f32>::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let c = a.matmul(&Matrix::identity(2)).unwrap();
        assert_eq!(c, a);
    }

    proptest! {
        #[test]
        fn sigmoid_monotone(x in -800.0f64..800.0, d in 0.0f64..50.0) {
            prop_assert!(sigmoid_scalar(x) <= sigmoid_scalar(x + d));
            let s = sigmoid_scalar(x);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn matmul_is_pure(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = random(&mut rng, 4, 3);
            let b = random(&mut rng, 3, 5);
            let x = matmul(&a, &b).unwrap();
            let y = matmul(&a, &b).unwrap();
            prop_assert!(x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
            prop_assert!(x.is_finite());
        }
    }
}
