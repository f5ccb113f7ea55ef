//! Uniform grids and densities sampled on their nodes.
//!
//! Nodes sit at both endpoints of every axis: an axis `[lower, upper]` with
//! spacing `r` carries `(upper - lower) / r + 1` nodes. The cell owned by a
//! node is the half-open `r`-cube centred on it, so binning covers
//! `[lower - r/2, upper + r/2)` along each axis.

use std::fmt;
use std::str::FromStr;

use crate::error::{FpError, Result};

const SPACING_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    r: f64,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, r: f64) -> Result<Self> {
        if lower.is_empty() {
            return Err(FpError::param("grid needs at least one axis"));
        }
        if lower.len() != upper.len() {
            return Err(FpError::param(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(FpError::param(format!(
                "grid spacing must be positive, got {r}"
            )));
        }
        let mut counts = Vec::with_capacity(lower.len());
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(FpError::param(format!(
                    "axis {axis}: need finite lower <= upper, got [{lo}, {hi}]"
                )));
            }
            let steps = (hi - lo) / r;
            let rounded = steps.round();
            if (steps - rounded).abs() > SPACING_REL_TOL * steps.max(1.0) {
                return Err(FpError::param(format!(
                    "axis {axis}: extent {} is not an integer multiple of r = {r}",
                    hi - lo
                )));
            }
            counts.push(rounded as usize + 1);
        }
        Ok(GridSpec {
            lower,
            upper,
            r,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> f64 {
        self.r
    }

    /// Node count along each axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `r^d`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.r.powi(self.dim() as i32)
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for axis in (0..self.dim().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.counts[axis + 1];
        }
        strides
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dim());
        index
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.r
    }

    /// Coordinates of a node given by flat index.
    pub fn node_position(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in (0..self.dim()).rev() {
            let i = rem % self.counts[axis];
            rem /= self.counts[axis];
            out[axis] = self.node_coord(axis, i);
        }
    }

    /// Flat index of the node whose cell contains `point`, if any.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        let mut flat = 0usize;
        for axis in 0..self.dim() {
            let t = ((point[axis] - self.lower[axis]) / self.r + 0.5).floor();
            if !(t >= 0.0 && t < self.counts[axis] as f64) {
                return None;
            }
            flat = flat * self.counts[axis] + t as usize;
        }
        Some(flat)
    }

    /// Whether every stencil neighbour (offsets in {-1, 0, 1}) of the node lies in the grid.
    pub fn is_interior(&self, index: &[usize]) -> bool {
        index
            .iter()
            .zip(&self.counts)
            .all(|(&i, &n)| i >= 1 && i + 1 < n)
    }

    pub fn interior_count(&self) -> usize {
        self.counts.iter().map(|&n| n.saturating_sub(2)).product()
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FpError::SpecMismatch(format!("{self} vs {other}")))
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for axis in 0..self.dim() {
            if axis > 0 {
                write!(f, "x")?;
            }
            write!(f, "[{}, {}]", self.lower[axis], self.upper[axis])?;
        }
        write!(f, " r={} nodes={:?}", self.r, self.counts)
    }
}

/// Where the values of a density came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    MonteCarlo,
    Hybrid,
    Classical,
    Analytic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::MonteCarlo => "monte-carlo",
            Provenance::Hybrid => "hybrid",
            Provenance::Classical => "classical",
            Provenance::Analytic => "analytic",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = FpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monte-carlo" => Ok(Provenance::MonteCarlo),
            "hybrid" => Ok(Provenance::Hybrid),
            "classical" => Ok(Provenance::Classical),
            "analytic" => Ok(Provenance::Analytic),
            other => Err(FpError::Format(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Values on the nodes of a [`GridSpec`], row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// Number of binned Monte Carlo samples behind the values; 0 otherwise.
    pub sample_count: u64,
    /// Probability mass the values are meant to carry inside the grid.
    pub mass: f64,
}

impl GridDensity {
    pub fn new(
        spec: GridSpec,
        values: Vec<f64>,
        provenance: Provenance,
        sample_count: u64,
        mass: f64,
    ) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(FpError::SpecMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FpError::param(format!(
                "non-finite density value at node {i}"
            )));
        }
        Ok(GridDensity {
            spec,
            values,
            provenance,
            sample_count,
            mass,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(
        spec: GridSpec,
        provenance: Provenance,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut x = vec![0.0; spec.dim()];
        let values: Vec<f64> = (0..spec.len())
            .map(|k| {
                spec.node_position(k, &mut x);
                f(&x)
            })
            .collect();
        let mass = spec.cell_volume() * values.iter().sum::<f64>();
        GridDensity::new(spec, values, provenance, 0, mass)
    }

    /// `r^d * sum(values)`.
    pub fn integral(&self) -> f64 {
        self.spec.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Value at the node whose cell contains `point`.
    pub fn lookup(&self, point: &[f64]) -> Option<f64> {
        self.spec.cell_of(point).map(|k| self.values[k])
    }
}
