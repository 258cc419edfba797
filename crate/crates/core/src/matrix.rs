//! Dense row-major matrices and pairwise Euclidean distances.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) breaks the distance-matrix contract")]
    NotDistance { row: usize, col: usize },
}

/// A genes × features matrix of finite `f64` values stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        let expected = n_rows * n_cols;
        if values.len() != expected {
            return Err(MatrixError::Shape {
                expected,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: pos / n_cols.max(1),
                col: pos % n_cols.max(1),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(MatrixError::Shape {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), n_cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// Column-wise concatenation `[a | b | ...]`.
    pub fn hconcat(blocks: &[&DenseMatrix]) -> Result<Self, MatrixError> {
        let n_rows = blocks.first().map_or(0, |b| b.n_rows);
        if let Some(bad) = blocks.iter().find(|b| b.n_rows != n_rows) {
            return Err(MatrixError::Shape {
                expected: n_rows,
                got: bad.n_rows,
            });
        }
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for b in blocks {
                values.extend_from_slice(b.row(i));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Euclidean distances between every pair of rows.
    pub fn pairwise_distances(&self) -> DistanceMatrix {
        let n = self.n_rows;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let a = self.row(i);
            for j in (i + 1)..n {
                let d = squared_euclidean(a, self.row(j)).sqrt();
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { n, values }
    }
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetric n×n matrix of non-negative distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a full n×n table. Symmetry and the zero diagonal are checked.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        if values.len() != n * n {
            return Err(MatrixError::Shape {
                expected: n * n,
                got: values.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                let bad =
                    !v.is_finite() || v < 0.0 || (i == j && v != 0.0) || v != values[j * n + i];
                if bad {
                    return Err(MatrixError::NotDistance { row: i, col: j });
                }
            }
        }
        Ok(Self { n, values })
    }

    pub(crate) fn from_raw(n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        let err = DenseMatrix::new(1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, MatrixError::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn hconcat_widths_add() {
        let a = DenseMatrix::zeros(3, 2);
        let b = DenseMatrix::zeros(3, 5);
        let c = DenseMatrix::hconcat(&[&a, &b]).unwrap();
        assert_eq!((c.n_rows(), c.n_cols()), (3, 7));
        let d = DenseMatrix::zeros(2, 1);
        assert!(DenseMatrix::hconcat(&[&a, &d]).is_err());
    }

    #[test]
    fn distances_are_euclidean() {
        let m = DenseMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let d = m.pairwise_distances();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(1, 1), 0.0);
    }
}
