//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use fphybrid::grid::{GridDensity, GridSpec, Provenance};
use fphybrid::operator::ConstraintSystem;
use fphybrid::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random dense constraint instance with `m <= n`, wrapped as a constraint system on a 1D grid.
pub struct Instance {
    pub b: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub v: DVector<f64>,
    pub system: ConstraintSystem,
    pub density: GridDensity,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..=20);
    let n = rng.random_range(m.max(3)..=40);
    let b = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let rhs = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let dense: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| b[(i, j)])
        .collect();
    let spec = GridSpec::new(vec![0.0], vec![(n - 1) as f64], 1.0).unwrap();
    let system = ConstraintSystem {
        matrix: CsrMatrix::from_dense(m, n, &dense),
        rhs: rhs.iter().copied().collect(),
        n_interior_rows: m.saturating_sub(1),
        spec: spec.clone(),
    };
    let density = GridDensity::new(
        spec,
        v.iter().copied().collect(),
        Provenance::MonteCarlo,
        0,
        1.0,
    )
    .unwrap();
    Instance {
        b,
        rhs,
        v,
        system,
        density,
    }
}

/// `v + pinv(B) (b - B v)` through an SVD pseudo-inverse.
pub fn svd_min_norm(inst: &Instance) -> DVector<f64> {
    let pinv = inst.b.clone().pseudo_inverse(1e-12).expect("svd");
    let d = &inst.rhs - &inst.b * &inst.v;
    &inst.v + pinv * d
}

/// Projects `w` onto the null space of `B`: `w - B^T (B B^T)^{-1} B w`.
pub fn null_space_projection(b: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let bbt = b * b.transpose();
    let y = bbt.lu().solve(&(b * w)).expect("full row rank");
    w - b.transpose() * y
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite 5-point Gauss-Legendre quadrature of `f` on `[a, b]` with `panels` panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * h;
            NODES
                .iter()
                .zip(WEIGHTS)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// Unnormalized double-well stationary density `exp(-2U/sigma^2)`, `U = x^4/2 - x^2`.
pub fn double_well_weight(x: f64, sigma: f64) -> f64 {
    (-2.0 * (0.5 * x.powi(4) - x * x) / (sigma * sigma)).exp()
}
