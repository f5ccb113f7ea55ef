//! Finite-difference discretization of the stationary Fokker-Planck operator
//!
//! ```text
//! L u = -sum_i d_i (f_i u) + 1/2 sum_ij d_i d_j (D_ij u)
//! ```
//!
//! Rows exist only for nodes whose whole stencil lies in the grid, so no
//! boundary condition enters the system. Products `f_i u` and `D_ij u` are
//! differenced with the coefficients evaluated at the displaced nodes.

use rayon::prelude::*;

use crate::error::{FpError, Result};
use crate::grid::GridSpec;
use crate::model::SdeModel;
use crate::sparse::CsrMatrix;

/// `B^ u = b`: interior Fokker-Planck rows followed by the normalization row.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_interior_rows: usize,
    pub spec: GridSpec,
}

impl ConstraintSystem {
    /// `||B^ u - b||`
    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        let bu = self.matrix.mul_vec(u);
        bu.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_grid(model: &SdeModel, spec: &GridSpec) -> Result<()> {
    if spec.dim() != model.dim() {
        return Err(FpError::SpecMismatch(format!(
            "grid dimension {} vs model dimension {}",
            spec.dim(),
            model.dim()
        )));
    }
    for (axis, &n) in spec.counts().iter().enumerate() {
        if n < 3 {
            return Err(FpError::DegenerateGrid { axis, nodes: n });
        }
    }
    Ok(())
}

/// Drift and diffusion sampled once per node.
struct NodeFields {
    dim: usize,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl NodeFields {
    fn sample(model: &SdeModel, spec: &GridSpec) -> Self {
        let d = spec.dim();
        let n = spec.len();
        let mut drift = vec![0.0; n * d];
        let mut diffusion = vec![0.0; n * d * d];
        drift
            .par_chunks_mut(d)
            .zip(diffusion.par_chunks_mut(d * d))
            .enumerate()
            .for_each(|(k, (f, dd))| {
                let mut y = vec![0.0; d];
                spec.node_position(k, &mut y);
                model.grid_drift(&y, f);
                model.grid_diffusion(&y, dd);
            });
        NodeFields {
            dim: d,
            drift,
            diffusion,
        }
    }

    fn f(&self, node: usize, i: usize) -> f64 {
        self.drift[node * self.dim + i]
    }

    fn dd(&self, node: usize, i: usize, j: usize) -> f64 {
        self.diffusion[(node * self.dim + i) * self.dim + j]
    }
}

fn interior_nodes(spec: &GridSpec) -> Vec<usize> {
    let mut idx = vec![0; spec.dim()];
    (0..spec.len())
        .filter(|&k| {
            spec.multi_index(k, &mut idx);
            spec.is_interior(&idx)
        })
        .collect()
}

fn stencil_row(fields: &NodeFields, strides: &[usize], r: f64, p: usize) -> Vec<(usize, f64)> {
    let d = fields.dim;
    let inv_2r = 0.5 / r;
    let inv_r2 = 1.0 / (r * r);
    let inv_4r2 = 0.25 * inv_r2;
    let mut row = Vec::with_capacity(3usize.pow(d as u32));
    for i in 0..d {
        let plus = p + strides[i];
        let minus = p - strides[i];
        // -d_i (f_i u), central.
        row.push((plus, -fields.f(plus, i) * inv_2r));
        row.push((minus, fields.f(minus, i) * inv_2r));
        // 1/2 d_ii (D_ii u), three-point.
        row.push((plus, 0.5 * fields.dd(plus, i, i) * inv_r2));
        row.push((minus, 0.5 * fields.dd(minus, i, i) * inv_r2));
        row.push((p, -fields.dd(p, i, i) * inv_r2));
        // The (i, j) and (j, i) halves combine into one full cross derivative.
        for j in (i + 1)..d {
            let corners = [
                (plus + strides[j], 1.0),
                (plus - strides[j], -1.0),
                (minus + strides[j], -1.0),
                (minus - strides[j], 1.0),
            ];
            for (node, sign) in corners {
                let dij = 0.5 * (fields.dd(node, i, j) + fields.dd(node, j, i));
                if dij != 0.0 {
                    row.push((node, sign * dij * inv_4r2));
                }
            }
        }
    }
    row
}

/// Sparse matrix `B` with one row per strictly interior node, over all nodes.
pub fn assemble_interior_operator(model: &SdeModel, spec: &GridSpec) -> Result<CsrMatrix> {
    check_grid(model, spec)?;
    let fields = NodeFields::sample(model, spec);
    let strides = spec.strides();
    let r = spec.spacing();
    let rows: Vec<Vec<(usize, f64)>> = interior_nodes(spec)
        .into_par_iter()
        .map(|p| stencil_row(&fields, &strides, r, p))
        .collect();
    Ok(CsrMatrix::from_rows(spec.len(), rows))
}

/// Appends the all-ones row with right-hand side `mass * r^-d`.
pub fn append_normalization(b: CsrMatrix, spec: &GridSpec, mass: f64) -> Result<ConstraintSystem> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(FpError::param(format!(
            "mass must lie in (0, 1], got {mass}"
        )));
    }
    if b.ncols() != spec.len() {
        return Err(FpError::SpecMismatch(format!(
            "operator has {} columns for {} nodes",
            b.ncols(),
            spec.len()
        )));
    }
    let n_interior_rows = b.nrows();
    let mut matrix = b;
    let ones: Vec<(usize, f64)> = (0..spec.len()).map(|k| (k, 1.0)).collect();
    matrix.push_row(&ones);
    let mut rhs = vec![0.0; n_interior_rows + 1];
    rhs[n_interior_rows] = mass / spec.cell_volume();
    Ok(ConstraintSystem {
        matrix,
        rhs,
        n_interior_rows,
        spec: spec.clone(),
    })
}

/// Constraint system of the hybrid method: `assemble_interior_operator` plus normalization.
pub fn assemble_constraint_system(
    model: &SdeModel,
    spec: &GridSpec,
    mass: f64,
) -> Result<ConstraintSystem> {
    let b = assemble_interior_operator(model, spec)?;
    append_normalization(b, spec, mass)
}

/// Zero-boundary system over interior unknowns: `A` (one row per interior
/// node, stencil entries on boundary nodes dropped) stacked on the all-ones
/// row, with right-hand side `[0; r^-d]`.
pub fn assemble_classical_system(
    model: &SdeModel,
    spec: &GridSpec,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let b = assemble_interior_operator(model, spec)?;
    let interior = interior_nodes(spec);
    let mut column_of = vec![usize::MAX; spec.len()];
    for (c, &node) in interior.iter().enumerate() {
        column_of[node] = c;
    }
    let n = interior.len();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..b.nrows())
        .map(|i| {
            let (cols, vals) = b.row(i);
            cols.iter()
                .zip(vals)
                .filter(|(&c, _)| column_of[c] != usize::MAX)
                .map(|(&c, &v)| (column_of[c], v))
                .collect()
        })
        .collect();
    rows.push((0..n).map(|c| (c, 1.0)).collect());
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0 / spec.cell_volume();
    Ok((CsrMatrix::from_rows(n, rows), rhs))
}

/// Scatters a solution over interior unknowns onto the full grid, zero on the boundary.
pub fn embed_interior(spec: &GridSpec, interior_values: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; spec.len()];
    for (&node, &v) in interior_nodes(spec).iter().zip(interior_values) {
        full[node] = v;
    }
    full
}
