//! Euler-Maruyama sampling and grid binning of the Monte Carlo reference density.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{FpError, Result};
use crate::grid::{GridDensity, GridSpec, Provenance};
use crate::model::SdeModel;

/// Default discarded initial time.
pub const DEFAULT_BURN_IN: f64 = 10.0;
pub const DEFAULT_DT: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub dt: f64,
    /// Total simulated time over all chains, burn-in included.
    pub horizon: f64,
    /// Time discarded at the start of every chain.
    pub burn_in: f64,
    /// Bin every `stride`-th post-burn-in state.
    pub stride: u64,
    pub seed: u64,
    pub chains: usize,
    /// Starting state in original coordinates; `None` uses the model default.
    pub initial_state: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            dt: DEFAULT_DT,
            horizon: 1000.0,
            burn_in: DEFAULT_BURN_IN,
            stride: 1,
            seed: 0,
            chains: 1,
            initial_state: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FpError::param(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(FpError::param(format!(
                "burn_in must be >= 0, got {}",
                self.burn_in
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > self.burn_in) {
            return Err(FpError::param(format!(
                "horizon T = {} must exceed burn_in = {}",
                self.horizon, self.burn_in
            )));
        }
        if self.stride == 0 {
            return Err(FpError::param("stride must be >= 1"));
        }
        if self.chains == 0 {
            return Err(FpError::param("chains must be >= 1"));
        }
        if self.steps_per_chain() <= self.burn_in_steps() {
            return Err(FpError::param(format!(
                "each of the {} chains runs {} steps, not more than the {} burn-in steps",
                self.chains,
                self.steps_per_chain(),
                self.burn_in_steps()
            )));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub fn steps_per_chain(&self) -> u64 {
        self.total_steps() / self.chains as u64
    }

    pub fn burn_in_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }

    /// Number of states each chain bins (in or out of the domain).
    pub fn binned_per_chain(&self) -> u64 {
        let eligible = self.steps_per_chain() - self.burn_in_steps();
        eligible.div_ceil(self.stride)
    }

    /// Simulated time that contributes binned samples, summed over chains.
    pub fn sampled_time(&self) -> f64 {
        (self.steps_per_chain() - self.burn_in_steps()) as f64 * self.dt * self.chains as f64
    }
}

/// Single Euler-Maruyama update `x + f(x) dt + sigma(x) sqrt(dt) xi` with
/// standard normal `noise = xi`.
pub fn euler_maruyama_step(
    state: &[f64],
    model: &SdeModel,
    dt: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let mut stepper = EulerMaruyama::new(model, dt);
    let mut next = state.to_vec();
    stepper
        .step(&mut next, noise)
        .map_err(|_| FpError::Diverged { chain: 0, step: 1 })?;
    Ok(next)
}

struct EulerMaruyama<'a> {
    model: &'a SdeModel,
    dt: f64,
    sqrt_dt: f64,
    isotropic: Option<f64>,
    drift: Vec<f64>,
    coeff: Vec<f64>,
}

impl<'a> EulerMaruyama<'a> {
    fn new(model: &'a SdeModel, dt: f64) -> Self {
        let n = model.dim();
        EulerMaruyama {
            model,
            dt,
            sqrt_dt: dt.sqrt(),
            isotropic: model.dynamics().isotropic_noise(),
            drift: vec![0.0; n],
            coeff: vec![0.0; n * n],
        }
    }

    /// Advances `state` in place. `Err(())` when the result is not finite.
    fn step(&mut self, state: &mut [f64], noise: &[f64]) -> std::result::Result<(), ()> {
        let n = state.len();
        self.model.drift(state, &mut self.drift);
        match self.isotropic {
            Some(s) => {
                let scale = s * self.sqrt_dt;
                for i in 0..n {
                    state[i] += self.drift[i] * self.dt + scale * noise[i];
                }
            }
            None => {
                self.model.noise(state, &mut self.coeff);
                for i in 0..n {
                    let row = &self.coeff[i * n..(i + 1) * n];
                    let kick: f64 = row.iter().zip(noise).map(|(a, b)| a * b).sum();
                    state[i] += self.drift[i] * self.dt + self.sqrt_dt * kick;
                }
            }
        }
        if state.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(())
        }
    }
}

/// Integer bin counts plus the number of binned states that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHistogram {
    pub spec: GridSpec,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl RawHistogram {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        RawHistogram {
            spec,
            counts: vec![0; n],
            outside: 0,
        }
    }

    pub fn add_point(&mut self, point: &[f64]) {
        match self.spec.cell_of(point) {
            Some(k) => self.counts[k] += 1,
            None => self.outside += 1,
        }
    }

    pub fn inside(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// All binned samples, in and out of the domain.
    pub fn total(&self) -> u64 {
        self.inside() + self.outside
    }

    pub fn merge(&mut self, other: &RawHistogram) -> Result<()> {
        self.spec.check_same(&other.spec)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
        Ok(())
    }

    /// `v = counts / (N r^d)` and the in-domain mass `inside / N`.
    pub fn to_density(&self) -> Result<(GridDensity, f64)> {
        let inside = self.inside();
        if inside == 0 {
            return Err(FpError::EmptyHistogram);
        }
        let total = self.total();
        let scale = 1.0 / (total as f64 * self.spec.cell_volume());
        let values = self.counts.iter().map(|&c| c as f64 * scale).collect();
        let mass = inside as f64 / total as f64;
        let density = GridDensity::new(
            self.spec.clone(),
            values,
            Provenance::MonteCarlo,
            total,
            mass,
        )?;
        Ok((density, mass))
    }
}

/// Adds up raw counts from independent parts and recomputes density and mass.
pub fn merge_histograms(parts: &[RawHistogram]) -> Result<(GridDensity, f64)> {
    let first = parts
        .first()
        .ok_or_else(|| FpError::param("merge needs at least one histogram"))?;
    let mut acc = RawHistogram::empty(first.spec.clone());
    for part in parts {
        acc.merge(part)?;
    }
    acc.to_density()
}

fn initial_state(model: &SdeModel, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let state = match &cfg.initial_state {
        Some(s) => s.clone(),
        None => crate::model::registry_entry(model.name())
            .map(|e| e.default_initial_state.to_vec())
            .unwrap_or_else(|_| vec![0.0; model.dim()]),
    };
    if state.len() != model.dim() {
        return Err(FpError::param(format!(
            "initial state has {} entries, model dimension is {}",
            state.len(),
            model.dim()
        )));
    }
    Ok(state)
}

/// Runs chain `chain` and hands every binned state (grid coordinates) to `visit`.
fn run_chain(
    model: &SdeModel,
    cfg: &SamplerConfig,
    chain: usize,
    mut visit: impl FnMut(&[f64]),
) -> Result<()> {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut stepper = EulerMaruyama::new(model, cfg.dt);
    let mut state = initial_state(model, cfg)?;
    let mut noise = vec![0.0; n];
    let mut grid_point = vec![0.0; n];
    let burn = cfg.burn_in_steps();
    for step in 1..=cfg.steps_per_chain() {
        for z in noise.iter_mut() {
            *z = StandardNormal.sample(&mut rng);
        }
        stepper
            .step(&mut state, &noise)
            .map_err(|_| FpError::Diverged { chain, step })?;
        if step > burn && (step - burn - 1).is_multiple_of(cfg.stride) {
            model.to_grid(&state, &mut grid_point);
            visit(&grid_point);
        }
    }
    Ok(())
}

/// Bins one chain into a fresh histogram.
pub fn sample_chain(
    model: &SdeModel,
    cfg: &SamplerConfig,
    spec: &GridSpec,
    chain: usize,
) -> Result<RawHistogram> {
    let mut hist = RawHistogram::empty(spec.clone());
    run_chain(model, cfg, chain, |p| hist.add_point(p))?;
    Ok(hist)
}

/// Raw counts of all chains, merged in chain order.
pub fn sample_counts(
    model: &SdeModel,
    cfg: &SamplerConfig,
    spec: &GridSpec,
) -> Result<RawHistogram> {
    cfg.validate()?;
    if spec.dim() != model.dim() {
        return Err(FpError::SpecMismatch(format!(
            "grid dimension {} vs model dimension {}",
            spec.dim(),
            model.dim()
        )));
    }
    let parts = (0..cfg.chains)
        .into_par_iter()
        .map(|w| sample_chain(model, cfg, spec, w))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = RawHistogram::empty(spec.clone());
    for part in &parts {
        acc.merge(part)?;
    }
    Ok(acc)
}

/// Monte Carlo density `v` on `spec` together with the in-domain mass.
pub fn sample_histogram(
    model: &SdeModel,
    cfg: &SamplerConfig,
    spec: &GridSpec,
) -> Result<(GridDensity, f64)> {
    sample_counts(model, cfg, spec)?.to_density()
}

/// Streams every binned state (grid coordinates) as little-endian f64, chain by chain.
pub fn dump_samples(model: &SdeModel, cfg: &SamplerConfig, out: &mut dyn Write) -> Result<u64> {
    cfg.validate()?;
    let mut written = 0u64;
    let mut io_err = None;
    for chain in 0..cfg.chains {
        run_chain(model, cfg, chain, |p| {
            if io_err.is_some() {
                return;
            }
            for v in p {
                if let Err(e) = out.write_all(&v.to_le_bytes()) {
                    io_err = Some(e);
                    return;
                }
            }
            written += 1;
        })?;
    }
    match io_err {
        Some(e) => Err(FpError::io("<sample dump>", e)),
        None => Ok(written),
    }
}

/// Pulls the states of all chains into memory (grid coordinates, row per state).
pub fn collect_samples(model: &SdeModel, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let parts = (0..cfg.chains)
        .into_par_iter()
        .map(|w| {
            let mut buf = Vec::new();
            run_chain(model, cfg, w, |p| buf.extend_from_slice(p))?;
            Ok(buf)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{double_well_model, lorenz_model, DoubleWellParams, Dynamics, LorenzParams};
    use std::sync::Arc;

    #[derive(Debug)]
    struct Frozen;

    impl Dynamics for Frozen {
        fn dim(&self) -> usize {
            2
        }
        fn drift(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn noise(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let m = SdeModel::new("frozen", Arc::new(Frozen));
        let next = euler_maruyama_step(&[0.3, -1.2], &m, 0.01, &[1.5, -0.4]).unwrap();
        assert_eq!(next, vec![0.3, -1.2]);
    }

    #[test]
    fn double_well_step_arithmetic() {
        let m = double_well_model(DoubleWellParams { sigma: 0.6 }).unwrap();
        let dt: f64 = 0.001;
        let next = euler_maruyama_step(&[0.0], &m, dt, &[0.1 / dt.sqrt()]).unwrap();
        assert!((next[0] - 0.06).abs() < 1e-15);
    }

    #[test]
    fn lorenz_origin_is_fixed_without_noise() {
        let m = lorenz_model(LorenzParams::default()).unwrap();
        let next = euler_maruyama_step(&[0.0; 3], &m, 0.001, &[0.0; 3]).unwrap();
        assert_eq!(next, vec![0.0; 3]);
    }

    #[test]
    fn divergence_is_reported() {
        let m = double_well_model(DoubleWellParams { sigma: 0.6 }).unwrap();
        let err = euler_maruyama_step(&[1e200], &m, 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, FpError::Diverged { .. }));

        let cfg = SamplerConfig {
            dt: 0.5,
            horizon: 100.0,
            burn_in: 0.0,
            initial_state: Some(vec![30.0]),
            ..Default::default()
        };
        let spec = GridSpec::new(vec![0.0], vec![1.0], 0.5).unwrap();
        assert!(matches!(
            sample_histogram(&m, &cfg, &spec),
            Err(FpError::Diverged { chain: 0, .. })
        ));
    }

    #[test]
    fn single_sample_formula() {
        let spec = GridSpec::new(vec![0.0], vec![1.0], 0.1).unwrap();
        let mut h = RawHistogram::empty(spec);
        h.add_point(&[0.31]);
        let (v, mass) = h.to_density().unwrap();
        assert_eq!(mass, 1.0);
        for (k, &val) in v.values.iter().enumerate() {
            if k == 3 {
                assert!((val - 10.0).abs() < 1e-12);
            } else {
                assert_eq!(val, 0.0);
            }
        }
    }

    #[test]
    fn outside_samples_count_toward_total() {
        let spec = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.5).unwrap();
        let mut h = RawHistogram::empty(spec);
        h.add_point(&[0.5, 0.5]);
        h.add_point(&[0.6, 0.4]);
        h.add_point(&[5.0, 0.0]);
        h.add_point(&[0.0, -3.0]);
        let (v, mass) = h.to_density().unwrap();
        assert_eq!(mass, 0.5);
        let k = v.spec.cell_of(&[0.5, 0.5]).unwrap();
        assert!((v.values[k] - 2.0).abs() < 1e-12);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let spec = GridSpec::new(vec![0.0], vec![1.0], 0.5).unwrap();
        let mut h = RawHistogram::empty(spec);
        h.add_point(&[10.0]);
        assert!(matches!(h.to_density(), Err(FpError::EmptyHistogram)));
    }

    #[test]
    fn merge_identity_and_doubling() {
        let spec = GridSpec::new(vec![0.0], vec![1.0], 0.25).unwrap();
        let mut p = RawHistogram::empty(spec.clone());
        p.add_point(&[0.5]);
        let empty = RawHistogram::empty(spec.clone());
        let (alone, _) = p.to_density().unwrap();
        let (merged, _) = merge_histograms(&[p.clone(), empty]).unwrap();
        assert_eq!(alone.values, merged.values);

        let (doubled, mass) = merge_histograms(&[p.clone(), p.clone()]).unwrap();
        assert_eq!(mass, 1.0);
        assert!((doubled.values[2] - 2.0 / (2.0 * 0.25)).abs() < 1e-12);

        let other = GridSpec::new(vec![0.0], vec![2.0], 0.25).unwrap();
        assert!(matches!(
            merge_histograms(&[p, RawHistogram::empty(other)]),
            Err(FpError::SpecMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        let ok = SamplerConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SamplerConfig {
            dt: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            stride: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            chains: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            horizon: 5.0,
            burn_in: 10.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        // 1000 time units over 200 chains leaves 5 per chain, below the 10 of burn-in.
        assert!(SamplerConfig { chains: 200, ..ok }.validate().is_err());
    }

    #[test]
    fn stride_controls_binned_count() {
        let m = double_well_model(DoubleWellParams::default()).unwrap();
        let spec = GridSpec::new(vec![-3.0], vec![3.0], 0.1).unwrap();
        for stride in [1, 3, 7] {
            let cfg = SamplerConfig {
                horizon: 20.0,
                burn_in: 1.0,
                stride,
                chains: 2,
                ..Default::default()
            };
            let counts = sample_counts(&m, &cfg, &spec).unwrap();
            assert_eq!(counts.total(), cfg.binned_per_chain() * 2);
        }
    }
}
