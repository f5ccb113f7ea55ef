//! SDE models `dX = f(X) dt + sigma(X) dW` and the benchmark systems.
//!
//! A model may carry an orthogonal change of coordinates `y = R x + o`.
//! Trajectories are always integrated in the original coordinates; the
//! histogram and the Fokker-Planck operator both live in `y`, where the drift
//! is conjugated to `R f(R^T (y - o))` and the noise coefficient to `R sigma`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{FpError, Result};

/// Deterministic drift and noise coefficient of an SDE.
///
/// Implementations must be pure: the same state always yields the same output.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// Noise coefficient `sigma(x)` as a row-major `dim x dim` matrix.
    fn noise(&self, x: &[f64], out: &mut [f64]);

    /// Whether `noise` is `s * I` for a constant `s`. Lets the sampler skip
    /// the matrix product.
    fn isotropic_noise(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    rotation: Vec<f64>,
    offset: Vec<f64>,
}

impl Transform {
    pub fn new(rotation: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let dim = offset.len();
        if rotation.len() != dim * dim {
            return Err(FpError::param(format!(
                "rotation needs {} entries for dimension {dim}, got {}",
                dim * dim,
                rotation.len()
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim)
                    .map(|k| rotation[k * dim + i] * rotation[k * dim + j])
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-12 {
                    return Err(FpError::param(format!(
                        "rotation is not orthogonal: (Q^T Q)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        Ok(Transform { rotation, offset })
    }

    pub fn identity(dim: usize) -> Self {
        let mut rotation = vec![0.0; dim * dim];
        for i in 0..dim {
            rotation[i * dim + i] = 1.0;
        }
        Transform {
            rotation,
            offset: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn rotation(&self) -> &[f64] {
        &self.rotation
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// `R x + o`
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = &self.rotation[i * n..(i + 1) * n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.offset[i];
        }
    }

    /// `R^T (y - o)`
    pub fn inverse(&self, y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (j, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n)
                .map(|i| self.rotation[i * n + j] * (y[i] - self.offset[i]))
                .sum();
        }
    }

    /// `R v` without the offset.
    pub fn rotate(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            out[i] = (0..n).map(|k| self.rotation[i * n + k] * v[k]).sum();
        }
    }
}

/// An SDE with an optional coordinate transform. Cheap to clone and safe to
/// share across sampling threads.
#[derive(Debug, Clone)]
pub struct SdeModel {
    name: String,
    dynamics: Arc<dyn Dynamics>,
    transform: Option<Transform>,
}

impl SdeModel {
    pub fn new(name: impl Into<String>, dynamics: Arc<dyn Dynamics>) -> Self {
        SdeModel {
            name: name.into(),
            dynamics,
            transform: None,
        }
    }

    pub fn with_transform(mut self, transform: Transform) -> Result<Self> {
        if transform.dim() != self.dim() {
            return Err(FpError::param(format!(
                "transform dimension {} does not match model dimension {}",
                transform.dim(),
                self.dim()
            )));
        }
        self.transform = Some(transform);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn transform(&self) -> Option<&Transform> {
        self.transform.as_ref()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    /// Drift in the original coordinates.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.dynamics.drift(x, out);
    }

    /// Noise coefficient in the original coordinates, row-major.
    pub fn noise(&self, x: &[f64], out: &mut [f64]) {
        self.dynamics.noise(x, out);
    }

    /// Maps a state to grid coordinates.
    pub fn to_grid(&self, x: &[f64], out: &mut [f64]) {
        match &self.transform {
            Some(t) => t.forward(x, out),
            None => out.copy_from_slice(x),
        }
    }

    /// Drift expressed in grid coordinates.
    pub fn grid_drift(&self, y: &[f64], out: &mut [f64]) {
        match &self.transform {
            None => self.dynamics.drift(y, out),
            Some(t) => {
                let n = self.dim();
                let mut x = vec![0.0; n];
                let mut f = vec![0.0; n];
                t.inverse(y, &mut x);
                self.dynamics.drift(&x, &mut f);
                t.rotate(&f, out);
            }
        }
    }

    /// Diffusion matrix `D = S S^T` in grid coordinates, where `S` is the
    /// (rotated) noise coefficient. Row-major `dim x dim`.
    pub fn grid_diffusion(&self, y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut s = vec![0.0; n * n];
        match &self.transform {
            None => self.dynamics.noise(y, &mut s),
            Some(t) => {
                let mut x = vec![0.0; n];
                let mut raw = vec![0.0; n * n];
                t.inverse(y, &mut x);
                self.dynamics.noise(&x, &mut raw);
                let r = t.rotation();
                for i in 0..n {
                    for j in 0..n {
                        s[i * n + j] = (0..n).map(|k| r[i * n + k] * raw[k * n + j]).sum();
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| s[i * n + k] * s[j * n + k]).sum();
            }
        }
    }
}

fn check_sigma(sigma: f64, strict: bool) -> Result<()> {
    let ok = sigma.is_finite() && if strict { sigma > 0.0 } else { sigma >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(FpError::param(format!(
            "noise strength sigma = {sigma} out of range"
        )))
    }
}

fn fill_scaled_identity(out: &mut [f64], dim: usize, s: f64) {
    out.fill(0.0);
    for i in 0..dim {
        out[i * dim + i] = s;
    }
}

/// Gradient flow of `U(x) = x^4/2 - x^2` with additive noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWellParams {
    pub sigma: f64,
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        DoubleWellParams { sigma: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPolParams {
    pub epsilon: f64,
    pub a: f64,
    pub sigma: f64,
}

impl Default for VanDerPolParams {
    fn default() -> Self {
        VanDerPolParams {
            epsilon: 0.1,
            a: 0.9964,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            a: 10.0,
            b: 28.0,
            c: 8.0 / 3.0,
            sigma: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        RosslerParams {
            a: 0.2,
            b: 0.2,
            c: 5.7,
            sigma: 0.1,
        }
    }
}

#[derive(Debug)]
struct DoubleWell(DoubleWellParams);

impl Dynamics for DoubleWell {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0] - 2.0 * x[0].powi(3);
    }

    fn noise(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.0.sigma;
    }

    fn isotropic_noise(&self) -> Option<f64> {
        Some(self.0.sigma)
    }
}

#[derive(Debug)]
struct VanDerPol(VanDerPolParams);

impl Dynamics for VanDerPol {
    fn dim(&self) -> usize {
        2
    }

    fn drift(&self, s: &[f64], out: &mut [f64]) {
        let VanDerPolParams { epsilon, a, .. } = self.0;
        let (x, y) = (s[0], s[1]);
        out[0] = (y - x * x * x / 3.0 + x) / epsilon;
        out[1] = a - x;
    }

    fn noise(&self, _x: &[f64], out: &mut [f64]) {
        fill_scaled_identity(out, 2, self.0.sigma);
    }

    fn isotropic_noise(&self) -> Option<f64> {
        Some(self.0.sigma)
    }
}

#[derive(Debug)]
struct Lorenz(LorenzParams);

impl Dynamics for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    fn drift(&self, s: &[f64], out: &mut [f64]) {
        let LorenzParams { a, b, c, .. } = self.0;
        let (x, y, z) = (s[0], s[1], s[2]);
        out[0] = a * (y - x);
        out[1] = x * (b - z) - y;
        out[2] = x * y - c * z;
    }

    fn noise(&self, _x: &[f64], out: &mut [f64]) {
        fill_scaled_identity(out, 3, self.0.sigma);
    }

    fn isotropic_noise(&self) -> Option<f64> {
        Some(self.0.sigma)
    }
}

#[derive(Debug)]
struct Rossler(RosslerParams);

impl Dynamics for Rossler {
    fn dim(&self) -> usize {
        3
    }

    fn drift(&self, s: &[f64], out: &mut [f64]) {
        let RosslerParams { a, b, c, .. } = self.0;
        let (x, y, z) = (s[0], s[1], s[2]);
        out[0] = -y - z;
        out[1] = x + a * y;
        out[2] = b + z * (x - c);
    }

    fn noise(&self, _x: &[f64], out: &mut [f64]) {
        fill_scaled_identity(out, 3, self.0.sigma);
    }

    fn isotropic_noise(&self) -> Option<f64> {
        Some(self.0.sigma)
    }
}

pub fn double_well_model(p: DoubleWellParams) -> Result<SdeModel> {
    check_sigma(p.sigma, true)?;
    Ok(SdeModel::new("double-well", Arc::new(DoubleWell(p))))
}

pub fn van_der_pol_model(p: VanDerPolParams) -> Result<SdeModel> {
    if !(p.epsilon.is_finite() && p.epsilon > 0.0) {
        return Err(FpError::param(format!(
            "epsilon must be positive, got {}",
            p.epsilon
        )));
    }
    if !p.a.is_finite() {
        return Err(FpError::param("van der Pol parameter a must be finite"));
    }
    check_sigma(p.sigma, false)?;
    Ok(SdeModel::new("van-der-pol", Arc::new(VanDerPol(p))))
}

pub fn lorenz_model(p: LorenzParams) -> Result<SdeModel> {
    if ![p.a, p.b, p.c].iter().all(|v| v.is_finite()) {
        return Err(FpError::param("Lorenz parameters must be finite"));
    }
    check_sigma(p.sigma, false)?;
    Ok(SdeModel::new("lorenz", Arc::new(Lorenz(p))))
}

pub fn rossler_model(p: RosslerParams) -> Result<SdeModel> {
    if ![p.a, p.b, p.c].iter().all(|v| v.is_finite()) {
        return Err(FpError::param("Rossler parameters must be finite"));
    }
    check_sigma(p.sigma, false)?;
    Ok(SdeModel::new("rossler", Arc::new(Rossler(p))))
}

/// Stationary density `exp(-2 U / sigma^2) / K` of the double-well model.
///
/// `K` is found by adaptive quadrature over `[-R, R]` (or `[0, R]` for the
/// half-line normalization), with `R` grown until the tail bound beyond it is
/// below `1e-14` of the integral.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWellDensity {
    sigma: f64,
    normalizer: f64,
}

fn double_well_potential(x: f64) -> f64 {
    0.5 * x.powi(4) - x * x
}

impl DoubleWellDensity {
    /// Normalized over the whole real line: the law of `X`.
    pub fn whole_line(sigma: f64) -> Result<Self> {
        Self::build(sigma, false)
    }

    /// Normalized over `x >= 0`: the law of `X` restricted to the right well,
    /// equal to twice the whole-line density there.
    pub fn half_line(sigma: f64) -> Result<Self> {
        Self::build(sigma, true)
    }

    fn build(sigma: f64, half: bool) -> Result<Self> {
        check_sigma(sigma, true)?;
        let c = 2.0 / (sigma * sigma);
        let g = |x: f64| (-c * double_well_potential(x)).exp();

        // Integral over [0, 1] bounds K from below; the tail test is relative to it.
        let core = adaptive_simpson(&g, 0.0, 1.0, 1e-15);
        let mut radius: f64 = 1.5;
        loop {
            let slope = 2.0 * radius.powi(3) - 2.0 * radius;
            // U is convex and increasing beyond 1, so the tail is below exp(-cU(R)) / (c U'(R)).
            let tail = (-c * double_well_potential(radius)).exp() / (c * slope);
            if tail < 1e-14 * core {
                break;
            }
            radius += 0.25;
        }
        let lower = if half { 0.0 } else { -radius };
        let normalizer = adaptive_simpson(&g, lower, radius, 1e-15 * core);
        Ok(DoubleWellDensity { sigma, normalizer })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The normalizing constant `K`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn eval(&self, x: f64) -> f64 {
        (-2.0 * double_well_potential(x) / (self.sigma * self.sigma)).exp() / self.normalizer
    }

    /// Integral of the density over `[a, b]` by adaptive quadrature.
    pub fn probability(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        adaptive_simpson(&|x| self.eval(x), a, b, 1e-15)
    }
}

/// Stationary double-well density at `x`, normalized over the half-line
/// `x >= 0` (the convention of the published `u(0) = 0.1062` at `sigma = 0.6`).
/// Recomputes `K`; use [`DoubleWellDensity`] when evaluating many points.
pub fn double_well_density(x: f64, sigma: f64) -> Result<f64> {
    Ok(DoubleWellDensity::half_line(sigma)?.eval(x))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // Seed with a fixed panel split so that narrow peaks are never missed.
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == PANELS { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            recurse(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// Named numeric parameters for a registered model. Scalars are one-element vectors.
pub type ModelParams = BTreeMap<String, Vec<f64>>;

/// A model constructor reachable by name from config files.
pub struct ModelEntry {
    pub name: &'static str,
    /// Accepted parameter keys besides `rotation` and `offset`.
    pub keys: &'static [&'static str],
    pub dim: usize,
    pub default_initial_state: &'static [f64],
    build: fn(&ModelParams) -> Result<SdeModel>,
}

impl fmt::Debug for ModelEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelEntry")
            .field("name", &self.name)
            .finish()
    }
}

fn scalar(params: &ModelParams, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) if v.len() == 1 => Ok(v[0]),
        Some(v) => Err(FpError::param(format!(
            "{key} takes one value, got {}",
            v.len()
        ))),
    }
}

fn build_double_well(p: &ModelParams) -> Result<SdeModel> {
    let d = DoubleWellParams::default();
    double_well_model(DoubleWellParams {
        sigma: scalar(p, "sigma", d.sigma)?,
    })
}

fn build_van_der_pol(p: &ModelParams) -> Result<SdeModel> {
    let d = VanDerPolParams::default();
    van_der_pol_model(VanDerPolParams {
        epsilon: scalar(p, "epsilon", d.epsilon)?,
        a: scalar(p, "a", d.a)?,
        sigma: scalar(p, "sigma", d.sigma)?,
    })
}

fn build_lorenz(p: &ModelParams) -> Result<SdeModel> {
    let d = LorenzParams::default();
    lorenz_model(LorenzParams {
        a: scalar(p, "a", d.a)?,
        b: scalar(p, "b", d.b)?,
        c: scalar(p, "c", d.c)?,
        sigma: scalar(p, "sigma", d.sigma)?,
    })
}

fn build_rossler(p: &ModelParams) -> Result<SdeModel> {
    let d = RosslerParams::default();
    rossler_model(RosslerParams {
        a: scalar(p, "a", d.a)?,
        b: scalar(p, "b", d.b)?,
        c: scalar(p, "c", d.c)?,
        sigma: scalar(p, "sigma", d.sigma)?,
    })
}

/// Compile-time model registry. New models are added here.
pub static MODEL_REGISTRY: &[ModelEntry] = &[
    ModelEntry {
        name: "double-well",
        keys: &["sigma"],
        dim: 1,
        default_initial_state: &[1.0],
        build: build_double_well,
    },
    ModelEntry {
        name: "van-der-pol",
        keys: &["sigma", "epsilon", "a"],
        dim: 2,
        default_initial_state: &[2.0, 0.0],
        build: build_van_der_pol,
    },
    ModelEntry {
        name: "lorenz",
        keys: &["sigma", "a", "b", "c"],
        dim: 3,
        default_initial_state: &[1.0, 1.0, 1.0],
        build: build_lorenz,
    },
    ModelEntry {
        name: "rossler",
        keys: &["sigma", "a", "b", "c"],
        dim: 3,
        default_initial_state: &[1.0, 1.0, 1.0],
        build: build_rossler,
    },
];

pub fn registry_entry(name: &str) -> Result<&'static ModelEntry> {
    MODEL_REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| {
            let known: Vec<_> = MODEL_REGISTRY.iter().map(|e| e.name).collect();
            FpError::param(format!(
                "unknown model {name:?}; known: {}",
                known.join(", ")
            ))
        })
}

impl ModelEntry {
    /// Builds the model, attaching a transform when `rotation` or `offset` is given.
    pub fn build(&self, params: &ModelParams) -> Result<SdeModel> {
        let model = (self.build)(params)?;
        let rotation = params.get("rotation");
        let offset = params.get("offset");
        if rotation.is_none() && offset.is_none() {
            return Ok(model);
        }
        let identity = Transform::identity(self.dim);
        let transform = Transform::new(
            rotation
                .cloned()
                .unwrap_or_else(|| identity.rotation().to_vec()),
            offset
                .cloned()
                .unwrap_or_else(|| identity.offset().to_vec()),
        )?;
        model.with_transform(transform)
    }
}

/// Builds a registered model by name.
pub fn model_by_name(name: &str, params: &ModelParams) -> Result<SdeModel> {
    registry_entry(name)?.build(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift_of(model: &SdeModel, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; model.dim()];
        model.drift(x, &mut out);
        out
    }

    #[test]
    fn double_well_drift_values() {
        let m = double_well_model(DoubleWellParams::default()).unwrap();
        assert_eq!(drift_of(&m, &[1.0]), vec![0.0]);
        assert_eq!(drift_of(&m, &[0.0]), vec![0.0]);
        assert_eq!(drift_of(&m, &[-1.0]), vec![0.0]);
        assert_eq!(drift_of(&m, &[2.0]), vec![-12.0]);
        let mut s = [0.0];
        m.noise(&[0.3], &mut s);
        assert_eq!(s, [0.6]);
    }

    #[test]
    fn van_der_pol_on_critical_manifold() {
        let p = VanDerPolParams::default();
        let m = van_der_pol_model(p).unwrap();
        let f = drift_of(&m, &[1.0, -2.0 / 3.0]);
        assert!(f[0].abs() < 1e-14);
        assert!((f[1] - (p.a - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn lorenz_fixed_points() {
        let p = LorenzParams::default();
        let m = lorenz_model(p).unwrap();
        assert_eq!(drift_of(&m, &[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let q = (p.c * (p.b - 1.0)).sqrt();
        for s in [1.0, -1.0] {
            let f = drift_of(&m, &[s * q, s * q, p.b - 1.0]);
            assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        }
    }

    #[test]
    fn rossler_at_origin() {
        let m = rossler_model(RosslerParams::default()).unwrap();
        assert_eq!(drift_of(&m, &[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.2]);
    }

    #[test]
    fn parameter_validation() {
        assert!(double_well_model(DoubleWellParams { sigma: 0.0 }).is_err());
        assert!(van_der_pol_model(VanDerPolParams {
            epsilon: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(lorenz_model(LorenzParams {
            sigma: -1.0,
            ..Default::default()
        })
        .is_err());
        assert!(double_well_density(0.0, -0.6).is_err());
    }

    #[test]
    fn density_at_origin_matches_published_value() {
        let u0 = double_well_density(0.0, 0.6).unwrap();
        assert!((u0 - 0.1062).abs() <= 5e-4, "u(0) = {u0}");
    }

    #[test]
    fn density_is_even() {
        let d = DoubleWellDensity::whole_line(0.6).unwrap();
        for k in 0..50 {
            let x = 0.07 * k as f64;
            assert_eq!(d.eval(x), d.eval(-x));
        }
    }

    #[test]
    fn half_line_is_twice_whole_line() {
        let whole = DoubleWellDensity::whole_line(0.6).unwrap();
        let half = DoubleWellDensity::half_line(0.6).unwrap();
        assert!((half.normalizer() * 2.0 - whole.normalizer()).abs() < 1e-12 * whole.normalizer());
        assert!((whole.eval(0.0) - 0.0530525501528451).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_orthogonal_rotation() {
        assert!(Transform::new(vec![1.0, 0.1, 0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(Transform::new(vec![0.0, -1.0, 1.0, 0.0], vec![0.0, 0.0]).is_ok());
    }

    #[test]
    fn registry_builds_by_name() {
        for entry in MODEL_REGISTRY {
            let m = model_by_name(entry.name, &ModelParams::new()).unwrap();
            assert_eq!(m.dim(), entry.dim);
            assert_eq!(entry.default_initial_state.len(), entry.dim);
        }
        assert!(model_by_name("duffing", &ModelParams::new()).is_err());
    }
}
