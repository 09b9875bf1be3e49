//! Dense matrices over a prime field with exact Gaussian elimination.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};

/// Row-major dense matrix. Carries no modulus; every operation that reduces
/// takes the field explicitly.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Fe>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Fe::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Fe::ONE);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Fe>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from rows of equal length. `cols` is needed for the empty case.
    pub fn from_rows(cols: usize, rows: Vec<Vec<Fe>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(Self { rows: n, cols, data })
    }

    /// Convenience for tests and fixtures: reduces raw integers into `field`.
    pub fn from_u64_rows(field: &PrimeField, rows: &[&[u64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), cols, "ragged matrix literal");
                r.iter().map(|&v| field.elem(v))
            })
            .collect();
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Fe {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Fe) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Fe] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[Fe]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn column(&self, c: usize) -> Vec<Fe> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn entries(&self) -> &[Fe] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[Fe]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                m.set(r, j, self.get(r, c));
            }
        }
        m
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { rows: rows.len(), cols: self.cols, data }
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, data })
    }

    pub fn mul(&self, field: &PrimeField, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = field.add(out.get(i, j), field.mul(a, other.get(k, j)));
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a column vector `x`.
    pub fn mul_vec(&self, field: &PrimeField, x: &[Fe]) -> Result<Vec<Fe>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| field.dot(r, x)).collect())
    }

    pub fn rank(&self, field: &PrimeField) -> usize {
        let mut basis = RowBasis::new(self.cols);
        for r in self.row_iter() {
            basis.insert(field, r);
        }
        basis.rank()
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in self.row_iter() {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Free-function form of [`Matrix::rank`].
pub fn mat_rank(field: &PrimeField, m: &Matrix) -> usize {
    m.rank(field)
}

/// Solves `a * x = b` for square nonsingular `a` by Gauss-Jordan elimination
/// with first-nonzero pivoting.
pub fn mat_solve(field: &PrimeField, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrix is {}x{}, not square",
            n,
            a.cols()
        )));
    }
    if b.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {n}",
            b.rows()
        )));
    }
    let m = b.cols();
    let width = n + m;
    let mut aug: Vec<Vec<Fe>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend_from_slice(b.row(i));
            row
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n).find(|&r| !aug[r][col].is_zero()).ok_or(Error::SingularMatrix)?;
        aug.swap(col, pivot);
        let inv = field.inv(aug[col][col])?;
        for v in aug[col].iter_mut() {
            *v = field.mul(*v, inv);
        }
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r == col {
                continue;
            }
            let factor = row[col];
            if factor.is_zero() {
                continue;
            }
            for c in col..width {
                row[c] = field.sub(row[c], field.mul(factor, pivot_row[c]));
            }
        }
    }

    let data = aug.into_iter().flat_map(|row| row.into_iter().skip(n)).collect();
    Matrix::from_vec(n, m, data)
}

/// Incrementally maintained reduced row-echelon basis of a row space.
///
/// Inserting a vector reduces it against the current pivots; a nonzero
/// remainder becomes a new basis row. Cloning a basis lets several ranks
/// share a common prefix (the conditioning rows in mutual-information
/// computations).
#[derive(Clone, Debug)]
pub struct RowBasis {
    cols: usize,
    // (pivot column, row normalised so the pivot entry is 1)
    rows: Vec<(usize, Vec<Fe>)>,
}

impl RowBasis {
    pub fn new(cols: usize) -> Self {
        Self { cols, rows: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Reduces `v` against the basis; returns the remainder.
    pub fn reduce(&self, field: &PrimeField, v: &[Fe]) -> Vec<Fe> {
        assert_eq!(v.len(), self.cols, "vector width mismatch");
        let mut v = v.to_vec();
        for (p, row) in &self.rows {
            let f = v[*p];
            if f.is_zero() {
                continue;
            }
            for (x, y) in v.iter_mut().zip(row) {
                if !y.is_zero() {
                    *x = field.sub(*x, field.mul(f, *y));
                }
            }
        }
        v
    }

    /// Returns true if `v` was independent of the basis (rank grew).
    pub fn insert(&mut self, field: &PrimeField, v: &[Fe]) -> bool {
        let mut r = self.reduce(field, v);
        let Some(p) = r.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = field.inv(r[p]).expect("nonzero pivot");
        for x in r.iter_mut() {
            *x = field.mul(*x, inv);
        }
        // keep existing rows reduced w.r.t. the new pivot
        for (_, row) in self.rows.iter_mut() {
            let f = row[p];
            if f.is_zero() {
                continue;
            }
            for (x, y) in row.iter_mut().zip(&r) {
                if !y.is_zero() {
                    *x = field.sub(*x, field.mul(f, *y));
                }
            }
        }
        self.rows.push((p, r));
        true
    }

    pub fn extend<'a, I>(&mut self, field: &PrimeField, rows: I)
    where
        I: IntoIterator<Item = &'a [Fe]>,
    {
        for r in rows {
            self.insert(field, r);
        }
    }

    pub fn contains(&self, field: &PrimeField, v: &[Fe]) -> bool {
        self.reduce(field, v).iter().all(|x| x.is_zero())
    }
}
