//! Compressed sparse row storage.

use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from row lists; duplicate columns within a row are summed and
    /// exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for row in rows {
            buf.clear();
            buf.extend_from_slice(row);
            buf.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < buf.len() {
                let c = buf[k].0;
                let mut v = 0.0;
                while k < buf.len() && buf[k].0 == c {
                    v += buf[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    assert!(c < ncols, "column {c} out of range");
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: rows.len(), ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row_dot(i, x)).collect()
    }

    /// `A^T y`.
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            let (idx, val) = self.row(i);
            for (&c, &v) in idx.iter().zip(val) {
                out[c] += v * yi;
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &i in rows {
            let (idx, val) = self.row(i);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: rows.len(), ncols: self.ncols, indptr, indices, values }
    }

    /// Column-major transpose as (column pointers, row indices, values).
    pub fn transpose_parts(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut count = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            count[c + 1] += 1;
        }
        for c in 0..self.ncols {
            count[c + 1] += count[c];
        }
        let mut next = count.clone();
        let mut rows = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&c, &v) in idx.iter().zip(val) {
                rows[next[c]] = i;
                vals[next[c]] = v;
                next[c] += 1;
            }
        }
        (count, rows, vals)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&c, &v) in idx.iter().zip(val) {
                m[(i, c)] += v;
            }
        }
        m
    }
}
