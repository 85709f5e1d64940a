use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{EvoError, Result};

/// Compressed-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<C64>,
}

impl SparseMat {
    /// Duplicate entries are summed; explicit zeros are kept out.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            assert!(i < rows && j < cols, "triplet ({i},{j}) out of bounds");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = SparseMat { rows, cols, row_ptr, col_idx, vals };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let trip: Vec<_> = self.triplets().filter(|t| t.2 != C64::new(0.0, 0.0)).collect();
        if trip.len() == self.vals.len() {
            return;
        }
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            vals.push(v);
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.vals = vals;
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_triplets(rows, cols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.vals[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[p] == j {
                return self.vals[p];
            }
        }
        C64::new(0.0, 0.0)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.vals[p] * x[self.col_idx[p]]).sum())
            .collect()
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..self.rows {
            y[i] = (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.vals[p] * x[self.col_idx[p]]).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        SparseMat { vals: self.vals.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn add(&self, other: &SparseMat) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(EvoError::ShapeMismatch(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_triplets(self.rows, self.cols, self.triplets().chain(other.triplets()).collect()))
    }

    pub fn matmul(&self, other: &SparseMat) -> Result<Self> {
        if self.cols != other.rows {
            return Err(EvoError::ShapeMismatch(format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let mut trip = Vec::new();
        for (i, k, a) in self.triplets() {
            for p in other.row_ptr[k]..other.row_ptr[k + 1] {
                trip.push((i, other.col_idx[p], a * other.vals[p]));
            }
        }
        Ok(Self::from_triplets(self.rows, other.cols, trip))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut trip = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    /// Places `blocks[r][c]` (all optional) into a block matrix.
    pub fn block(blocks: &[Vec<Option<&SparseMat>>], row_dims: &[usize], col_dims: &[usize]) -> Self {
        let rows: usize = row_dims.iter().sum();
        let cols: usize = col_dims.iter().sum();
        let mut trip = Vec::new();
        let mut r0 = 0;
        for (r, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (c, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    assert_eq!((b.rows, b.cols), (row_dims[r], col_dims[c]));
                    trip.extend(b.triplets().map(|(i, j, v)| (i + r0, j + c0, v)));
                }
                c0 += col_dims[c];
            }
            r0 += row_dims[r];
        }
        Self::from_triplets(rows, cols, trip)
    }

    /// Largest entrywise deviation of `self + self^*` from zero.
    pub fn skew_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let s = self.add(&self.adjoint()).expect("square");
        s.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Sparse triplet CSV with columns `row,col,re,im`.
    pub fn write_triplets_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,re,im")?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i},{j},{},{}", v.re, v.im)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn assembly_and_products() {
        let a = SparseMat::from_triplets(2, 3, vec![(0, 0, c(1.0)), (1, 2, c(2.0)), (0, 0, c(1.0)), (1, 1, c(0.0))]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), c(2.0));
        assert_eq!(a.mul_vec(&[c(1.0), c(5.0), c(3.0)]), vec![c(2.0), c(6.0)]);
        let at = a.transpose();
        assert_eq!(at.get(2, 1), c(2.0));
        let p = a.matmul(&at).unwrap();
        assert_eq!(p.to_dense(), a.to_dense() * at.to_dense());
        assert_eq!(SparseMat::from_dense(&a.to_dense()), a);
    }

    #[test]
    fn skew_block() {
        let g = SparseMat::from_triplets(3, 2, vec![(0, 0, c(1.0)), (1, 0, c(-1.0)), (1, 1, c(1.0)), (2, 1, c(-1.0))]);
        let d = g.adjoint().scale(c(-1.0));
        let a = SparseMat::block(&[vec![None, Some(&d)], vec![Some(&g), None]], &[2, 3], &[2, 3]);
        assert_eq!(a.skew_defect(), 0.0);
        let mut buf = Vec::new();
        a.write_triplets_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + a.nnz());
    }
}
