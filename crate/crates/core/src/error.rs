use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FpError> = std::result::Result<T, E>;

/// Every failure the library can report. Each variant maps onto a stable
/// machine-readable class and a distinct process exit code.
#[derive(Debug, Error)]
pub enum FpError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("trajectory diverged at step {step} of chain {chain}")]
    Diverged { chain: usize, step: u64 },

    #[error("no Monte Carlo sample landed inside the grid domain")]
    EmptyHistogram,

    #[error("grid specifications do not match: {0}")]
    SpecMismatch(String),

    #[error("degenerate grid: axis {axis} has {nodes} nodes, need at least 3")]
    DegenerateGrid { axis: usize, nodes: usize },

    #[error("rank-deficient system: |R[{index}]| = {value:e} below {threshold:e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("density is identically zero after clamping negative entries")]
    EmptyDensity,

    #[error("subdomains {first} and {second} have overlapping interiors")]
    Overlap { first: usize, second: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error("expected a 2D grid, got dimension {0}")]
    NotTwoDimensional(usize),

    #[error("refusing {nodes} nodes with the direct QR method (limit {limit})")]
    MemoryGuard { nodes: usize, limit: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FpError {
    /// Short error class printed by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            FpError::Parameter(_) => "parameter",
            FpError::Diverged { .. } => "diverged-trajectory",
            FpError::EmptyHistogram => "empty-histogram",
            FpError::SpecMismatch(_) => "spec-mismatch",
            FpError::DegenerateGrid { .. } => "degenerate-grid",
            FpError::RankDeficient { .. } => "rank-deficiency",
            FpError::NonConvergence { .. } => "non-convergence",
            FpError::EmptyDensity => "empty-density",
            FpError::Overlap { .. } => "overlap",
            FpError::Config { .. } => "config",
            FpError::Format(_) => "format",
            FpError::NotTwoDimensional(_) => "non-2d",
            FpError::MemoryGuard { .. } => "memory-guard",
            FpError::Io { .. } => "io",
        }
    }

    /// Process exit code. 1 is left for unexpected failures and 2 for
    /// command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            FpError::Parameter(_) => 3,
            FpError::Diverged { .. } => 4,
            FpError::EmptyHistogram => 5,
            FpError::SpecMismatch(_) => 6,
            FpError::DegenerateGrid { .. } => 7,
            FpError::RankDeficient { .. } => 8,
            FpError::NonConvergence { .. } => 9,
            FpError::EmptyDensity => 10,
            FpError::Overlap { .. } => 11,
            FpError::Config { .. } => 12,
            FpError::Format(_) => 13,
            FpError::NotTwoDimensional(_) => 14,
            FpError::MemoryGuard { .. } => 15,
            FpError::Io { .. } => 16,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        FpError::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Table of (class, exit code) pairs, in exit-code order.
pub const EXIT_CODES: &[(&str, i32)] = &[
    ("parameter", 3),
    ("diverged-trajectory", 4),
    ("empty-histogram", 5),
    ("spec-mismatch", 6),
    ("degenerate-grid", 7),
    ("rank-deficiency", 8),
    ("non-convergence", 9),
    ("empty-density", 10),
    ("overlap", 11),
    ("config", 12),
    ("format", 13),
    ("non-2d", 14),
    ("memory-guard", 15),
    ("io", 16),
];
