//! Column-major dense matrix used for every intermediate result.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense matrix stored column by column: element `(r, c)` lives at `c * rows + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> ColMatrix<T> {
    /// Wraps column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "ColMatrix::from_col_major",
                format!("{} elements for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally sized columns.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::dim(
                    "ColMatrix::from_columns",
                    format!("column {c} has {} rows, expected {rows}", col.len()),
                ));
            }
            data.extend_from_slice(col);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major nested rows (the natural way to write literals).
    pub fn from_rows(rows_data: &[Vec<T>]) -> Result<Self> {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, Vec::len);
        if let Some((r, row)) = rows_data.iter().enumerate().find(|(_, row)| row.len() != cols) {
            return Err(Error::dim(
                "ColMatrix::from_rows",
                format!("row {r} has {} columns, expected {cols}", row.len()),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            data.extend(rows_data.iter().map(|row| row[c]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
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
    pub fn get(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r]
    }

    /// Contiguous slice holding column `c`.
    #[inline]
    pub fn column(&self, c: usize) -> &[T] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.cols).map(move |c| self.column(c))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> ColMatrix<U> {
        ColMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().copied().map(f).collect() }
    }

    pub fn try_map<U: Copy, E>(&self, f: impl FnMut(T) -> std::result::Result<U, E>) -> std::result::Result<ColMatrix<U>, E> {
        let data = self.data.iter().copied().map(f).collect::<std::result::Result<Vec<_>, E>>()?;
        Ok(ColMatrix { rows: self.rows, cols: self.cols, data })
    }

    /// Row-major nested copy, mostly for printing and tests.
    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| (0..self.cols).map(|c| self.get(r, c)).collect()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            data.extend((0..self.cols).map(|c| self.get(r, c)));
        }
        Self { rows: self.cols, cols: self.rows, data }
    }
}

impl<T: Scalar> ColMatrix<T> {
    /// Identity matrix in the format of `like`.
    pub fn identity_like(n: usize, like: T) -> Self {
        let zero = like.zero_like();
        let one = like.one_like();
        let mut data = vec![zero; n * n];
        for i in 0..n {
            data[i * n + i] = one;
        }
        Self { rows: n, cols: n, data }
    }
}
