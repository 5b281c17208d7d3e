//! Compressed sparse row matrices with complex entries.

use num_complex::Complex64 as C64;

use crate::linalg::{CMat, CVec};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMat { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut trips: Vec<(usize, usize, C64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<C64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds {rows}x{cols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        let mut m = SparseMat { rows, cols, indptr, indices, values };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        let zero = C64::new(0.0, 0.0);
        if self.values.iter().all(|v| *v != zero) {
            return;
        }
        let trips = self.triplets().filter(|t| t.2 != zero).collect();
        *self = SparseMat::from_triplets(self.rows, self.cols, trips);
    }

    pub fn from_dense(m: &CMat) -> Self {
        let mut trips = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    trips.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseMat::from_triplets(m.nrows(), m.ncols(), trips)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |p| (i, self.indices[p], self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn mul_vec(&self, x: &CVec) -> CVec {
        assert_eq!(x.len(), self.cols);
        let mut y = CVec::zeros(self.rows);
        for i in 0..self.rows {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn mul_dense(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.rows, x.ncols());
        for j in 0..x.ncols() {
            let col: CVec = x.column(j).into_owned();
            out.set_column(j, &self.mul_vec(&col));
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        SparseMat::from_triplets(self.cols, self.rows, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= s;
        }
        out.drop_zeros();
        out
    }

    pub fn add(&self, other: &SparseMat) -> Self {
        assert_eq!(self.shape(), other.shape());
        SparseMat::from_triplets(self.rows, self.cols, self.triplets().chain(other.triplets()).collect())
    }

    pub fn sub(&self, other: &SparseMat) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Dense submatrix on the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CMat {
        let mut colpos = vec![usize::MAX; self.cols];
        for (p, &c) in cols.iter().enumerate() {
            colpos[c] = p;
        }
        let mut m = CMat::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let b = colpos[self.indices[p]];
                if b != usize::MAX {
                    m[(a, b)] = self.values[p];
                }
            }
        }
        m
    }
}
