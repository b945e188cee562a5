use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor2<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor2::new",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(
                    "Tensor2::from_rows",
                    format!("row {i} has {} values, expected {cols}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Converts 64-bit values, e.g. literals in tests or checkpoint payloads.
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.rows, rhs.cols);
        gemm_nn(self, rhs, &mut out, T::one(), T::zero())?;
        Ok(out)
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hcat(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::shape(
                "hcat",
                format!("{} rows vs {} rows", self.rows, rhs.rows),
            ));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn column_slice(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(Error::shape(
                "column_slice",
                format!("[{start}, {}) of {} columns", start + width, self.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }
}

/// `c = alpha * a * b + beta * c`.
pub(crate) fn gemm_nn<T: Real>(
    a: &Tensor2<T>,
    b: &Tensor2<T>,
    c: &mut Tensor2<T>,
    alpha: T,
    beta: T,
) -> Result<()> {
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(Error::shape(
            "matmul",
            format!(
                "{:?} x {:?} into {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ),
        ));
    }
    T::gemm(
        a.rows,
        a.cols,
        b.cols,
        alpha,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        b.cols as isize,
        1,
        beta,
        &mut c.data,
        c.cols as isize,
        1,
    );
    Ok(())
}

/// `c = alpha * aᵀ * b + beta * c`.
pub(crate) fn gemm_tn<T: Real>(
    a: &Tensor2<T>,
    b: &Tensor2<T>,
    c: &mut Tensor2<T>,
    alpha: T,
    beta: T,
) -> Result<()> {
    if a.rows != b.rows || c.rows != a.cols || c.cols != b.cols {
        return Err(Error::shape(
            "matmul_tn",
            format!(
                "{:?}ᵀ x {:?} into {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ),
        ));
    }
    T::gemm(
        a.cols,
        a.rows,
        b.cols,
        alpha,
        &a.data,
        1,
        a.cols as isize,
        &b.data,
        b.cols as isize,
        1,
        beta,
        &mut c.data,
        c.cols as isize,
        1,
    );
    Ok(())
}

/// `c = alpha * a * bᵀ + beta * c`.
pub(crate) fn gemm_nt<T: Real>(
    a: &Tensor2<T>,
    b: &Tensor2<T>,
    c: &mut Tensor2<T>,
    alpha: T,
    beta: T,
) -> Result<()> {
    if a.cols != b.cols || c.rows != a.rows || c.cols != b.rows {
        return Err(Error::shape(
            "matmul_nt",
            format!(
                "{:?} x {:?}ᵀ into {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ),
        ));
    }
    T::gemm(
        a.rows,
        a.cols,
        b.rows,
        alpha,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        1,
        b.cols as isize,
        beta,
        &mut c.data,
        c.cols as isize,
        1,
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor2<f64>, b: &Tensor2<f64>) -> Tensor2<f64> {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(a: &Tensor2<f64>) -> Tensor2<f64> {
        let mut out = Tensor2::zeros(a.cols(), a.rows());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                out.set(j, i, a.get(i, j));
            }
        }
        out
    }

    fn ints(rows: usize, cols: usize, seed: i64) -> Tensor2<f64> {
        let data = (0..rows * cols)
            .map(|i| (((i as i64 * 7 + seed * 13) % 11) - 5) as f64)
            .collect();
        Tensor2::new(rows, cols, data).unwrap()
    }

    #[test]
    fn transposed_products_match_naive() {
        let a = ints(5, 3, 1);
        let b = ints(5, 4, 2);
        let mut c = Tensor2::zeros(3, 4);
        gemm_tn(&a, &b, &mut c, 1.0, 0.0).unwrap();
        assert_eq!(c, naive(&transpose(&a), &b));

        let d = ints(4, 3, 3);
        let mut e = Tensor2::zeros(5, 4);
        gemm_nt(&a, &d, &mut e, 1.0, 0.0).unwrap();
        assert_eq!(e, naive(&a, &transpose(&d)));
    }

    #[test]
    fn beta_accumulates() {
        let a = ints(2, 2, 4);
        let b = ints(2, 2, 5);
        let mut c = naive(&a, &b);
        gemm_nn(&a, &b, &mut c, 1.0, 1.0).unwrap();
        assert_eq!(c, naive(&a, &b).map(|x| 2.0 * x));
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor2::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        let a = Tensor2::<f64>::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
        assert!(a.hcat(&Tensor2::zeros(3, 1)).is_err());
    }

    #[test]
    fn hcat_and_slice_are_inverse() {
        let a = ints(3, 2, 6);
        let b = ints(3, 4, 7);
        let c = a.hcat(&b).unwrap();
        assert_eq!(c.column_slice(0, 2).unwrap(), a);
        assert_eq!(c.column_slice(2, 4).unwrap(), b);
    }
}
