//! Compressed sparse row storage and an element-block accumulator.

use std::collections::BTreeMap;
use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};

/// CSR matrix with sorted column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (r, c, v) = triplets[t];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows).map(|r| x[r] * self.row(r).map(|(c, v)| v * y[c]).sum::<f64>()).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trips.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trips)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// `self + s * other`, entries merged in sorted order.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        let mut trips = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            trips.extend(self.row(r).map(|(c, v)| (r, c, v)));
            trips.extend(other.row(r).map(|(c, v)| (r, c, s * v)));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trips)
    }

    /// `self - s * diag(d)`.
    pub fn sub_diagonal(&self, d: &[f64], s: f64) -> CsrMatrix {
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.nrows);
        for r in 0..self.nrows {
            trips.extend(self.row(r).map(|(c, v)| (r, c, v)));
            trips.push((r, r, -s * d[r]));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trips)
    }

    /// `diag(left) * A * diag(right)`.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] *= left[r] * right[self.col_idx[k]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let trips: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("CSR indices are in range")
    }

    /// Coordinate text dump: `row col value` per line, 17 significant digits.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:.16e}", r, c, v)?;
            }
        }
        Ok(())
    }
}

/// Dense blocks keyed by `(row element, column element)`, row-major.
#[derive(Clone, Debug, Default)]
pub struct BlockSparse {
    pub blocks: BTreeMap<(usize, usize), Vec<f64>>,
}

impl BlockSparse {
    pub fn add_block(&mut self, row: usize, col: usize, data: &[f64]) {
        match self.blocks.get_mut(&(row, col)) {
            Some(b) => b.iter_mut().zip(data).for_each(|(x, y)| *x += y),
            None => {
                self.blocks.insert((row, col), data.to_vec());
            }
        }
    }

    pub fn merge(&mut self, other: &BlockSparse) {
        for (&(r, c), b) in &other.blocks {
            self.add_block(r, c, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks.values_mut() {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Expands to CSR given per-element offsets and sizes. Blocks are
    /// visited in key order, so rows come out sorted.
    pub fn to_csr(&self, offsets: &[usize], sizes: &[usize], n: usize) -> CsrMatrix {
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); offsets.len()];
        for &(r, c) in self.blocks.keys() {
            row_cols[r].push(c);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (re, cols) in row_cols.iter().enumerate() {
            for i in 0..sizes[re] {
                for &ce in cols {
                    let b = &self.blocks[&(re, ce)];
                    let nc = sizes[ce];
                    for j in 0..nc {
                        col_idx.push(offsets[ce] + j);
                        values.push(b[i * nc + j]);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix { nrows: n, ncols: n, row_ptr, col_idx, values }
    }
}
