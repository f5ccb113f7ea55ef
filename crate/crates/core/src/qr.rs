//! Row-merging Givens QR for sparse matrices.
//!
//! Rows are rotated one at a time into an upper-triangular `R` stored by
//! pivot column, so only `R` (never `Q`) is kept. A row may end in a constant
//! "tail" `value * (e_s + e_{s+1} + ... + e_{n-1})`; an all-ones
//! normalization row is then stored in O(1) and the rows it is rotated into
//! pick up a tail instead of filling in.

use crate::error::{FpError, Result};
use crate::sparse::CsrMatrix;

/// Relative size below which a diagonal entry of `R` flags rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// Shortest trailing run of equal values compressed into a tail.
const MIN_TAIL_RUN: usize = 16;

#[derive(Debug, Clone, Default)]
struct QrRow {
    idx: Vec<usize>,
    val: Vec<f64>,
    /// `(start, value)`; every explicit index is below `start`.
    tail: Option<(usize, f64)>,
    rhs: f64,
}

impl QrRow {
    fn from_csr(cols: &[usize], vals: &[f64], ncols: usize, rhs: f64) -> Self {
        let mut run = 0;
        if let (Some(&last_c), Some(&last_v)) = (cols.last(), vals.last()) {
            if last_c + 1 == ncols {
                run = 1;
                while run < cols.len() {
                    let k = cols.len() - 1 - run;
                    if cols[k] + run + 1 == ncols && vals[k] == last_v {
                        run += 1;
                    } else {
                        break;
                    }
                }
            }
        }
        if run >= MIN_TAIL_RUN {
            let keep = cols.len() - run;
            QrRow {
                idx: cols[..keep].to_vec(),
                val: vals[..keep].to_vec(),
                tail: Some((cols[keep], vals[keep])),
                rhs,
            }
        } else {
            QrRow {
                idx: cols.to_vec(),
                val: vals.to_vec(),
                tail: None,
                rhs,
            }
        }
    }

    fn lead(&self) -> Option<usize> {
        match (self.idx.first(), self.tail) {
            (Some(&c), _) => Some(c),
            (None, Some((s, _))) => Some(s),
            (None, None) => None,
        }
    }

    /// Makes the leading entry explicit and drops empty tails.
    fn normalize(&mut self, ncols: usize) {
        if let Some((s, v)) = self.tail {
            if v == 0.0 || s >= ncols {
                self.tail = None;
            } else if self.idx.is_empty() {
                self.idx.push(s);
                self.val.push(v);
                self.tail = (s + 1 < ncols).then_some((s + 1, v));
            }
        }
        while let Some(&v) = self.val.first() {
            if v != 0.0 {
                break;
            }
            self.idx.remove(0);
            self.val.remove(0);
            if self.idx.is_empty() {
                self.normalize(ncols);
                return;
            }
        }
    }

    /// Moves the tail start to `start`, materializing the skipped columns.
    fn extend_tail_to(&mut self, start: usize, ncols: usize) {
        if let Some((s, v)) = self.tail {
            for c in s..start.min(ncols) {
                self.idx.push(c);
                self.val.push(v);
            }
            self.tail = (start < ncols).then_some((start, v));
        }
    }

    fn tail_start_bound(&self) -> usize {
        match self.tail {
            Some((s, _)) => s,
            None => self.idx.last().map_or(0, |&c| c + 1),
        }
    }

    fn nnz(&self) -> usize {
        self.idx.len() + usize::from(self.tail.is_some())
    }
}

/// Applies the rotation that zeroes `row`'s leading entry against `pivot`.
fn rotate(pivot: &mut QrRow, row: &mut QrRow, ncols: usize) {
    let a = pivot.val[0];
    let b = row.val[0];
    let rho = a.hypot(b);
    let (c, s) = (a / rho, b / rho);

    if pivot.tail.is_some() || row.tail.is_some() {
        let start = pivot.tail_start_bound().max(row.tail_start_bound());
        pivot.extend_tail_to(start, ncols);
        row.extend_tail_to(start, ncols);
    }
    let pt = pivot.tail.map_or(0.0, |t| t.1);
    let rt = row.tail.map_or(0.0, |t| t.1);
    let tail_start = pivot.tail.or(row.tail).map(|t| t.0);

    let cap = pivot.idx.len() + row.idx.len();
    let mut new_p = QrRow {
        idx: Vec::with_capacity(cap),
        val: Vec::with_capacity(cap),
        tail: None,
        rhs: c * pivot.rhs + s * row.rhs,
    };
    let mut new_r = QrRow {
        idx: Vec::with_capacity(cap),
        val: Vec::with_capacity(cap),
        tail: None,
        rhs: -s * pivot.rhs + c * row.rhs,
    };
    let (mut i, mut j) = (1, 1);
    new_p.idx.push(pivot.idx[0]);
    new_p.val.push(rho);
    while i < pivot.idx.len() || j < row.idx.len() {
        let ci = pivot.idx.get(i).copied().unwrap_or(usize::MAX);
        let cj = row.idx.get(j).copied().unwrap_or(usize::MAX);
        let (col, x, y) = if ci < cj {
            i += 1;
            (ci, pivot.val[i - 1], 0.0)
        } else if cj < ci {
            j += 1;
            (cj, 0.0, row.val[j - 1])
        } else {
            i += 1;
            j += 1;
            (ci, pivot.val[i - 1], row.val[j - 1])
        };
        let p = c * x + s * y;
        let q = -s * x + c * y;
        if p != 0.0 {
            new_p.idx.push(col);
            new_p.val.push(p);
        }
        if q != 0.0 {
            new_r.idx.push(col);
            new_r.val.push(q);
        }
    }
    if let Some(start) = tail_start {
        new_p.tail = Some((start, c * pt + s * rt));
        new_r.tail = Some((start, -s * pt + c * rt));
    }
    *pivot = new_p;
    *row = new_r;
    pivot.normalize(ncols);
    row.normalize(ncols);
}

/// Upper-triangular factor of a sparse matrix with at least as many rows as
/// columns, plus `Q^T b` when a right-hand side was supplied.
#[derive(Debug, Clone)]
pub struct SparseQr {
    ncols: usize,
    rows: Vec<QrRow>,
    residual_sq: f64,
}

impl SparseQr {
    /// Factors `a`. Fails with a rank-deficiency error when a pivot is
    /// missing or `|R_jj| < RANK_TOL * max |R_ii|`.
    pub fn factor(a: &CsrMatrix, rhs: Option<&[f64]>) -> Result<Self> {
        let ncols = a.ncols();
        if let Some(b) = rhs {
            assert_eq!(b.len(), a.nrows());
        }
        let mut slots: Vec<Option<QrRow>> = vec![None; ncols];
        let mut residual_sq = 0.0;
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            let mut row = QrRow::from_csr(cols, vals, ncols, rhs.map_or(0.0, |b| b[i]));
            row.normalize(ncols);
            loop {
                let Some(col) = row.lead() else {
                    residual_sq += row.rhs * row.rhs;
                    break;
                };
                match &mut slots[col] {
                    slot @ None => {
                        *slot = Some(row);
                        break;
                    }
                    Some(pivot) => rotate(pivot, &mut row, ncols),
                }
            }
        }
        let mut rows = Vec::with_capacity(ncols);
        let mut missing = None;
        for (j, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(r) => rows.push(r),
                None => {
                    missing.get_or_insert(j);
                    rows.push(QrRow::default());
                }
            }
        }
        let scale = rows
            .iter()
            .filter_map(|r| r.val.first())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = RANK_TOL * scale;
        if let Some(index) = missing {
            return Err(FpError::RankDeficient {
                index,
                value: 0.0,
                threshold,
            });
        }
        for (j, r) in rows.iter().enumerate() {
            let d = r.val[0].abs();
            if d < threshold {
                return Err(FpError::RankDeficient {
                    index: j,
                    value: d,
                    threshold,
                });
            }
        }
        Ok(SparseQr {
            ncols,
            rows,
            residual_sq,
        })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Stored entries of `R`, a tail counting as one.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(QrRow::nnz).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.val[0]).collect()
    }

    /// Norm of the least-squares residual `||A x - b||` for the factored right-hand side.
    pub fn residual_norm(&self) -> f64 {
        self.residual_sq.sqrt()
    }

    /// `Q^T b` restricted to the first `ncols` components.
    pub fn qt_rhs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    /// Solves `R x = z` by back substitution.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.ncols;
        let mut x = vec![0.0; n];
        // suffix[t] = x[t] + ... + x[n-1]
        let mut suffix = vec![0.0; n + 1];
        for j in (0..n).rev() {
            let row = &self.rows[j];
            let mut acc = z[j];
            for (&c, &v) in row.idx.iter().zip(&row.val).skip(1) {
                acc -= v * x[c];
            }
            if let Some((s, v)) = row.tail {
                acc -= v * suffix[s];
            }
            x[j] = acc / row.val[0];
            suffix[j] = suffix[j + 1] + x[j];
        }
        x
    }

    /// Solves `R^T z = d` by forward substitution.
    pub fn solve_lower_transposed(&self, d: &[f64]) -> Vec<f64> {
        let n = self.ncols;
        let mut work = d.to_vec();
        let mut z = vec![0.0; n];
        // Tail contributions start at column s and persist to the end.
        let mut pending = vec![0.0; n + 1];
        let mut running = 0.0;
        for j in 0..n {
            running += pending[j];
            let row = &self.rows[j];
            z[j] = (work[j] - running) / row.val[0];
            for (&c, &v) in row.idx.iter().zip(&row.val).skip(1) {
                work[c] -= v * z[j];
            }
            if let Some((s, v)) = row.tail {
                pending[s] += v * z[j];
            }
        }
        z
    }

    /// Least-squares minimizer `R^-1 Q^T b`.
    pub fn least_squares(&self) -> Vec<f64> {
        self.solve_upper(&self.qt_rhs())
    }
}
