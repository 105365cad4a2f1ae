//! Compressed sparse row storage with triplet assembly.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Unsorted coordinate entries; duplicates are summed on compression.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Push every entry of `m` shifted by the given offsets, scaled by `s`.
    pub fn push_block(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, s: f64) {
        for (i, j, v) in m.iter() {
            self.push(i + row_off, j + col_off, s * v);
        }
    }

    /// Like `push_block`, transposing `m` first.
    pub fn push_block_transposed(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, s: f64) {
        for (i, j, v) in m.iter() {
            self.push(j + row_off, i + col_off, s * v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = TripletBuilder::with_capacity(n, n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push(i, j, m[(i, j)]);
                }
            }
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries (explicit zeros included).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn add(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Dimension(format!(
                "cannot add {}x{} and {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        t.push_block(self, 0, 0, 1.0);
        t.push_block(other, 0, 0, 1.0);
        Ok(t.build())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        t.push_block_transposed(self, 0, 0, 1.0);
        t.build()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(self.nrows, (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()))
    }

    /// Product with a dense matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for (i, j, v) in self.iter() {
            for c in 0..x.ncols() {
                out[(i, c)] += v * x[(j, c)];
            }
        }
        out
    }

    /// Product of the transpose with a dense matrix.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.nrows);
        let mut out = DMatrix::zeros(self.ncols, x.ncols());
        for (i, j, v) in self.iter() {
            for c in 0..x.ncols() {
                out[(j, c)] += v * x[(i, c)];
            }
        }
        out
    }

    /// Quadratic form xᵀ A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.iter().map(|(i, j, v)| x[i] * v * x[j]).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Extract rows `r0..r1`, columns `c0..c1`.
    pub fn block(&self, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> CsrMatrix {
        let mut t = TripletBuilder::new(r.len(), c.len());
        for i in r.clone() {
            for (j, v) in self.row(i) {
                if c.contains(&j) {
                    t.push(i - r.start, j - c.start, v);
                }
            }
        }
        t.build()
    }

    /// Drop rows and columns flagged in `mask` (the stored pattern shrinks accordingly).
    pub fn without_rows_cols(&self, mask: &[bool]) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.iter() {
            if !mask[i] && !mask[j] {
                t.push(i, j, v);
            }
        }
        t.build()
    }

    /// Indices of rows with at least one nonzero value.
    pub fn nonzero_rows(&self) -> Vec<usize> {
        (0..self.nrows).filter(|&i| self.row(i).any(|(_, v)| v != 0.0)).collect()
    }

    /// Indices of columns with at least one nonzero value.
    pub fn nonzero_cols(&self) -> Vec<usize> {
        let mut seen = vec![false; self.ncols];
        for (_, j, v) in self.iter() {
            if v != 0.0 {
                seen[j] = true;
            }
        }
        (0..self.ncols).filter(|&j| seen[j]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        let trip: Vec<_> = self.iter().map(|(i, j, v)| faer::sparse::Triplet::new(i, j, v)).collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .expect("indices are in range by construction")
    }

    /// Write as coordinate text: a header line then one `row col value` line per entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# rows={} cols={} nnz={}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(r: R) -> Result<CsrMatrix> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let mut dims = [0usize; 2];
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                let val = v.parse().map_err(|_| Error::Parse(format!("bad header field {tok}")))?;
                match k {
                    "rows" => dims[0] = val,
                    "cols" => dims[1] = val,
                    _ => {}
                }
            }
        }
        let mut t = TripletBuilder::new(dims[0], dims[1]);
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad matrix line {line:?}")));
            }
            let bad = |_| Error::Parse(format!("bad matrix line {line:?}"));
            let i: usize = f[0].parse().map_err(|_| Error::Parse(line.clone()))?;
            let j: usize = f[1].parse().map_err(|_| Error::Parse(line.clone()))?;
            let v: f64 = f[2].parse().map_err(bad)?;
            if i >= dims[0] || j >= dims[1] {
                return Err(Error::Parse(format!("entry ({i},{j}) out of range")));
            }
            t.push(i, j, v);
        }
        Ok(t.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2, 3);
        t.push(1, 2, 1.5);
        t.push(0, 0, 1.0);
        t.push(1, 2, 2.0);
        let m = t.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 3.5);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn coo_round_trip() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 0.0, 1.0 / 3.0]);
        let m = CsrMatrix::from_dense(&d);
        let mut buf = Vec::new();
        m.write_coo(&mut buf).unwrap();
        let back = CsrMatrix::read_coo(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn transpose_and_products() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, -1.0, 4.0]);
        let m = CsrMatrix::from_dense(&d);
        assert_eq!(m.transpose().to_dense(), d.transpose());
        let x = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        assert_eq!(m.mul_vec(&x), &d * &x);
        let y = DMatrix::from_row_slice(2, 1, &[3.0, 1.0]);
        assert_eq!(m.tr_mul_dense(&y), d.transpose() * y);
    }
}
