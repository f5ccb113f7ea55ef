//! Invariant probability densities of randomly perturbed ODEs.
//!
//! A Monte Carlo histogram `v` from Euler-Maruyama sampling is projected onto
//! the affine set `B u = b` built from a finite-difference discretization of
//! the stationary Fokker-Planck equation on an arbitrary box, with no
//! boundary condition. The result is the closest density to `v` in the
//! 2-norm that satisfies the discrete equation and carries the sampled mass.

// Stencil and state-vector code indexes several arrays in lockstep.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod model;
pub mod operator;
pub mod qr;
pub mod sampler;
pub mod solver;
pub mod sparse;

pub use error::{FpError, Result};
pub use grid::{GridDensity, GridSpec, Provenance};
pub use model::SdeModel;
pub use operator::ConstraintSystem;
pub use sampler::SamplerConfig;
pub use solver::{SolverMethod, SolverOptions};
