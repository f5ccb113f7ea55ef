//! Minimum-norm correction of a reference density onto `B^ u = b`, and the
//! classical zero-boundary least-squares baseline.
//!
//! The correction is `u = v + x`, where `x = B^T (B B^T)^-1 d` is the
//! minimum 2-norm solution of `B^ x = d = b - B^ v`. Two routes compute it:
//!
//! * `DenseQr`: factor `B^^T = Q R` (sparse Givens, Q discarded) and use
//!   `x = B^^T R^-1 R^-T d`, with iterative refinement on the residual.
//! * `IterativeCgne`: conjugate gradients on `B^ B^^T y = d`, Jacobi
//!   preconditioned by squared row norms, then `x = B^^T y`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{FpError, Result};
use crate::grid::{GridDensity, Provenance};
use crate::operator::ConstraintSystem;
use crate::qr::SparseQr;
use crate::sparse::CsrMatrix;

/// Node count above which the direct method refuses to run.
pub const DIRECT_NODE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    DenseQr,
    IterativeCgne,
    Auto,
}

impl SolverMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverMethod::DenseQr => "dense-qr",
            SolverMethod::IterativeCgne => "iterative-cgne",
            SolverMethod::Auto => "auto",
        }
    }
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverMethod {
    type Err = FpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-qr" | "qr" => Ok(SolverMethod::DenseQr),
            "iterative-cgne" | "cgne" => Ok(SolverMethod::IterativeCgne),
            "auto" => Ok(SolverMethod::Auto),
            other => Err(FpError::param(format!(
                "unknown solver method {other:?} (dense-qr, iterative-cgne, auto)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Target relative residual of the iterative method.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the number of unknowns.
    pub max_iter: Option<usize>,
    /// Node count above which `Auto` picks the iterative method.
    pub auto_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            tol: 1e-10,
            max_iter: None,
            auto_threshold: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(FpError::param(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(FpError::param("max_iter must be >= 1"));
        }
        Ok(())
    }

    pub fn resolve(&self, nodes: usize) -> SolverMethod {
        match self.method {
            SolverMethod::Auto if nodes > self.auto_threshold => SolverMethod::IterativeCgne,
            SolverMethod::Auto => SolverMethod::DenseQr,
            m => m,
        }
    }
}

/// What a solve did, for reports and `key=value` diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub method: SolverMethod,
    pub rows: usize,
    pub cols: usize,
    /// CG iterations, or refinement sweeps for the QR route.
    pub iterations: usize,
    /// `||B^ u - b|| / ||b||` of the returned density.
    pub relative_residual: f64,
    /// Stored entries of `R` (QR route) or of `B^` (iterative route).
    pub factor_nnz: usize,
    pub seconds: f64,
}

impl SolveDiagnostics {
    pub fn to_key_values(&self) -> String {
        format!(
            "solver.method={}\nsolver.rows={}\nsolver.cols={}\nsolver.iterations={}\nsolver.relative_residual={:.16e}\nsolver.factor_nnz={}\nsolver.seconds={:.16e}\n",
            self.method,
            self.rows,
            self.cols,
            self.iterations,
            self.relative_residual,
            self.factor_nnz,
            self.seconds
        )
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(matrix: &CsrMatrix, x: &[f64], target: &[f64]) -> Vec<f64> {
    let mut r = matrix.mul_vec(x);
    for (ri, ti) in r.iter_mut().zip(target) {
        *ri = ti - *ri;
    }
    r
}

/// Minimum 2-norm `x` with `matrix x = d`, through a Q-less QR of `matrix^T`.
fn min_norm_qr(matrix: &CsrMatrix, d: &[f64]) -> Result<(Vec<f64>, usize, usize)> {
    let transposed = matrix.transpose();
    let qr = SparseQr::factor(&transposed, None)?;
    let solve = |rhs: &[f64]| {
        let z = qr.solve_lower_transposed(rhs);
        let y = qr.solve_upper(&z);
        transposed.mul_vec(&y)
    };
    let mut x = solve(d);
    let d_norm = norm(d);
    let mut sweeps = 0;
    // Corrected semi-normal equations: each sweep solves for the residual again.
    for _ in 0..4 {
        let r = residual(matrix, &x, d);
        if norm(&r) <= 1e-14 * d_norm {
            break;
        }
        let dx = solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        sweeps += 1;
    }
    Ok((x, sweeps, qr.nnz()))
}

/// Preconditioned CG on `A A^T y = d`; returns `x = A^T y`.
fn min_norm_cgne(
    matrix: &CsrMatrix,
    d: &[f64],
    stop_at: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let transposed = matrix.transpose();
    let m = matrix.nrows();
    let n = matrix.ncols();
    let inv_diag: Vec<f64> = (0..m)
        .map(|i| {
            let s = matrix.row_norm_sq(i);
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        })
        .collect();
    let apply = |p: &[f64], tmp: &mut Vec<f64>, out: &mut Vec<f64>| {
        transposed.matvec(p, tmp);
        matrix.matvec(tmp, out);
    };

    let d_norm = norm(d);
    let mut y = vec![0.0; m];
    let mut r = d.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut tmp = vec![0.0; n];
    let mut w = vec![0.0; m];
    let mut x = vec![0.0; n];

    if d_norm <= stop_at {
        return Ok((x, 0));
    }
    for it in 1..=max_iter {
        apply(&p, &mut tmp, &mut w);
        let pw = dot(&p, &w);
        if pw.is_nan() || pw <= 0.0 {
            return Err(FpError::NonConvergence {
                iterations: it,
                residual: norm(&r) / d_norm,
            });
        }
        let alpha = rz / pw;
        for i in 0..m {
            y[i] += alpha * p[i];
            r[i] -= alpha * w[i];
        }
        if norm(&r) <= stop_at {
            // Confirm against the true residual before stopping.
            transposed.matvec(&y, &mut x);
            let true_r = residual(matrix, &x, d);
            if norm(&true_r) <= stop_at {
                return Ok((x, it));
            }
            r = true_r;
        }
        for i in 0..m {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    transposed.matvec(&y, &mut x);
    let final_r = norm(&residual(matrix, &x, d)) / d_norm;
    Err(FpError::NonConvergence {
        iterations: max_iter,
        residual: final_r,
    })
}

/// Closest density to `v` in the 2-norm that satisfies `sys`.
pub fn min_norm_correction(
    sys: &ConstraintSystem,
    v: &GridDensity,
    opts: &SolverOptions,
) -> Result<(GridDensity, SolveDiagnostics)> {
    opts.validate()?;
    sys.spec.check_same(&v.spec)?;
    let start = Instant::now();
    let rows = sys.matrix.nrows();
    let cols = sys.matrix.ncols();
    if rows > cols {
        return Err(FpError::RankDeficient {
            index: cols,
            value: 0.0,
            threshold: 0.0,
        });
    }
    let method = opts.resolve(cols);
    let d = residual(&sys.matrix, &v.values, &sys.rhs);
    let d_norm = norm(&d);
    let b_norm = sys.rhs_norm();

    let (x, iterations, factor_nnz) = if d_norm == 0.0 {
        (vec![0.0; cols], 0, 0)
    } else {
        match method {
            SolverMethod::DenseQr | SolverMethod::Auto => {
                if cols > DIRECT_NODE_LIMIT {
                    return Err(FpError::MemoryGuard {
                        nodes: cols,
                        limit: DIRECT_NODE_LIMIT,
                    });
                }
                min_norm_qr(&sys.matrix, &d)?
            }
            SolverMethod::IterativeCgne => {
                let stop_at = opts.tol * d_norm.min(b_norm.max(f64::MIN_POSITIVE));
                let max_iter = opts.max_iter.unwrap_or(10 * cols);
                let (x, it) = min_norm_cgne(&sys.matrix, &d, stop_at, max_iter)?;
                (x, it, sys.matrix.nnz())
            }
        }
    };

    let values: Vec<f64> = v.values.iter().zip(&x).map(|(a, b)| a + b).collect();
    let relative_residual = sys.residual_norm(&values) / b_norm;
    let mass = sys.rhs[rows - 1] * sys.spec.cell_volume();
    let u = GridDensity::new(
        sys.spec.clone(),
        values,
        Provenance::Hybrid,
        v.sample_count,
        mass,
    )?;
    let diagnostics = SolveDiagnostics {
        method: if method == SolverMethod::Auto {
            SolverMethod::DenseQr
        } else {
            method
        },
        rows,
        cols,
        iterations,
        relative_residual,
        factor_nnz,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((u, diagnostics))
}

/// Least-squares solution of an overdetermined full-column-rank system by sparse QR.
pub fn classical_lsq(a_hat: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a_hat.nrows() {
        return Err(FpError::param(format!(
            "right-hand side has {} entries for {} rows",
            b.len(),
            a_hat.nrows()
        )));
    }
    if a_hat.nrows() < a_hat.ncols() {
        return Err(FpError::RankDeficient {
            index: a_hat.nrows(),
            value: 0.0,
            threshold: 0.0,
        });
    }
    let qr = SparseQr::factor(a_hat, Some(b))?;
    Ok(qr.least_squares())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Postprocess {
    Raw,
    ClampRenormalize,
}

impl FromStr for Postprocess {
    type Err = FpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Postprocess::Raw),
            "clamp" | "clamp-renormalize" => Ok(Postprocess::ClampRenormalize),
            other => Err(FpError::param(format!(
                "unknown postprocess mode {other:?} (raw, clamp)"
            ))),
        }
    }
}

impl fmt::Display for Postprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Postprocess::Raw => "raw",
            Postprocess::ClampRenormalize => "clamp",
        })
    }
}

/// Optionally clamps negative entries to zero and rescales to the original `r^d sum(u)`.
pub fn postprocess_density(u: &GridDensity, mode: Postprocess) -> Result<GridDensity> {
    if let Some(i) = u.values.iter().position(|v| !v.is_finite()) {
        return Err(FpError::param(format!(
            "non-finite density value at node {i}"
        )));
    }
    match mode {
        Postprocess::Raw => Ok(u.clone()),
        Postprocess::ClampRenormalize => {
            if u.values.iter().all(|&v| v >= 0.0) {
                return Ok(u.clone());
            }
            let original: f64 = u.values.iter().sum();
            let clamped: Vec<f64> = u.values.iter().map(|&v| v.max(0.0)).collect();
            let kept: f64 = clamped.iter().sum();
            if kept == 0.0 {
                return Err(FpError::EmptyDensity);
            }
            let scale = original / kept;
            let mut out = u.clone();
            out.values = clamped.into_iter().map(|v| v * scale).collect();
            Ok(out)
        }
    }
}

/// `sum |u_i|` over negative entries divided by `sum |u_i|`.
pub fn negative_mass_fraction(u: &GridDensity) -> f64 {
    let neg: f64 = u.values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let total: f64 = u.values.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        0.0
    } else {
        neg / total
    }
}
