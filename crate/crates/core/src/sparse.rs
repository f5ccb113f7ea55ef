//! Compressed sparse row storage.

use std::io::{self, Write};

use rayon::prelude::*;

/// Row count above which products are split across threads.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns are summed
    /// and exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range {ncols}");
                if last == Some(c) {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = Some(c);
                }
            }
            // Drop entries that cancelled to zero.
            let start = *indptr.last().unwrap();
            let mut write = start;
            for read in start..indices.len() {
                if data[read] != 0.0 {
                    indices[write] = indices[read];
                    data[write] = data[read];
                    write += 1;
                }
            }
            indices.truncate(write);
            data.truncate(write);
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(nrows: usize, ncols: usize, dense: &[f64]) -> Self {
        let rows = (0..nrows)
            .map(|i| {
                (0..ncols)
                    .filter_map(|j| {
                        let v = dense[i * ncols + j];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.data[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Appends one row given as sorted `(column, value)` pairs.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, v) in entries {
            assert!(c < self.ncols);
            self.indices.push(c);
            self.data.push(v);
        }
        self.indptr.push(self.indices.len());
        self.nrows += 1;
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum()
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let kernel = |(i, yi): (usize, &mut f64)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(kernel);
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `y = A^T x` by scattering rows. Use [`CsrMatrix::transpose`] for repeated products.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = i;
                data[slot] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[i * self.ncols + c] = v;
            }
        }
        dense
    }

    /// Coordinate text: one `row col value` triple per line, zero-based,
    /// values with 17 significant digits.
    pub fn write_coordinate(&self, out: &mut dyn Write) -> io::Result<()> {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {c} {v:.16e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = CsrMatrix::from_rows(
            3,
            vec![
                vec![(2, 1.0), (0, 2.0), (2, 3.0)],
                vec![(1, 1.0), (1, -1.0)],
            ],
        );
        assert_eq!(m.row(0), (&[0usize, 2][..], &[2.0, 4.0][..]));
        assert_eq!(m.row(1).0.len(), 0);
    }

    #[test]
    fn products_match_dense() {
        let dense = [1.0, 0.0, 2.0, 0.0, -1.0, 3.0];
        let m = CsrMatrix::from_dense(2, 3, &dense);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, 7.0]);
        let mut y = vec![0.0; 3];
        m.matvec_transpose(&[1.0, 2.0], &mut y);
        assert_eq!(y, vec![1.0, -2.0, 8.0]);
        assert_eq!(m.transpose().mul_vec(&[1.0, 2.0]), y);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn coordinate_text_round_trips_values() {
        let m = CsrMatrix::from_rows(2, vec![vec![(1, 0.1 + 0.2)], vec![(0, -1.0 / 3.0)]]);
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: f64 = lines[0].split_whitespace().nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 0.1 + 0.2);
        let v: f64 = lines[1].split_whitespace().nth(2).unwrap().parse().unwrap();
        assert_eq!(v, -1.0 / 3.0);
    }
}
