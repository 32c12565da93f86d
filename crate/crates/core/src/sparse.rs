//! Compressed sparse row matrices and the sparse-times-dense kernel used by
//! message passing.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::par;

/// Row-major compressed sparse matrix with `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Entries within a
    /// row are sorted by column; duplicate coordinates are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: c,
                    len: cols,
                });
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r];
            indices[slot] = c;
            values[slot] = v;
            next[r] += 1;
        }
        for r in 0..rows {
            let span = indptr[r]..indptr[r + 1];
            let mut row: Vec<(usize, f64)> = indices[span.clone()]
                .iter()
                .copied()
                .zip(values[span.clone()].iter().copied())
                .collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEdge { u: r, v: w[0].0 });
            }
            for (k, (c, v)) in span.zip(row) {
                indices[k] = c;
                values[k] = v;
            }
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
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

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Entry `(r, c)`, zero when not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Exact transpose via counting sort; column order within rows stays sorted.
    pub fn transpose(&self) -> Self {
        let mut indptr = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            indptr[c + 1] += 1;
        }
        for i in 0..self.cols {
            indptr[i + 1] += indptr[i];
        }
        let mut next = indptr.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Multiplies each row `r` by `scale[r]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for (r, &f) in scale.iter().enumerate().take(self.rows) {
            for v in &mut out.values[self.indptr[r]..self.indptr[r + 1]] {
                *v *= f;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    fn check_rhs(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() != self.cols {
            return Err(Error::ShapeMismatch {
                context: "sparse matmul",
                expected: (self.cols, x.ncols()),
                actual: x.dim(),
            });
        }
        Ok(())
    }

    /// `self · x`, row-parallel when the `parallel` feature is enabled.
    pub fn matmul(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rhs(x)?;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let d = x.ncols();
        let mut out = vec![0.0; self.rows * d];
        par::for_each_row(&mut out, d, |r, row| self.row_kernel(r, xs, d, row));
        Ok(Array2::from_shape_vec((self.rows, d), out).expect("shape"))
    }

    /// `self · x` on the calling thread only.
    pub fn matmul_seq(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rhs(x)?;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let d = x.ncols();
        let mut out = vec![0.0; self.rows * d];
        par::for_each_row_seq(&mut out, d, |r, row| self.row_kernel(r, xs, d, row));
        Ok(Array2::from_shape_vec((self.rows, d), out).expect("shape"))
    }

    #[inline]
    fn row_kernel(&self, r: usize, xs: &[f64], d: usize, out: &mut [f64]) {
        let (cols, vals) = self.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let src = &xs[c * d..(c + 1) * d];
            for (o, s) in out.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }
}
