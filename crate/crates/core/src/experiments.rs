//! End-to-end pipelines: single hybrid runs, error tables, subdomain gluing,
//! local 3D boxes and the relaxation-cycle concentration metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{format_f64, local_box};
use crate::error::{FpError, Result};
use crate::grid::{GridDensity, GridSpec, Provenance};
use crate::model::{DoubleWellDensity, SdeModel, VanDerPolParams};
use crate::operator::assemble_constraint_system;
use crate::sampler::{collect_samples, sample_histogram, SamplerConfig};
use crate::solver::{
    min_norm_correction, negative_mass_fraction, SolveDiagnostics, SolverMethod, SolverOptions,
};

/// What probability mass the grid is normalized to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMode {
    /// The Monte Carlo estimate of the in-domain probability.
    MonteCarlo,
    /// Mass 1: the density conditioned on the box.
    Full,
}

/// Flat summary of one hybrid run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub model: String,
    pub spec: GridSpec,
    pub sampler: SamplerConfig,
    /// Mass the normalization row enforced.
    pub mass: f64,
    /// Fraction of Monte Carlo samples that landed inside the grid.
    pub mc_mass: f64,
    /// Discrete L² error `sqrt(r^d sum e²)` of the hybrid density, once scored.
    pub l2_error: Option<f64>,
    /// Unscaled Euclidean norm of the same error vector.
    pub l2_error_euclidean: Option<f64>,
    pub mc_l2_error: Option<f64>,
    pub mc_l2_error_euclidean: Option<f64>,
    /// Wall-clock seconds of Monte Carlo sampling.
    pub phase1_seconds: f64,
    /// Wall-clock seconds of assembly plus the constrained solve.
    pub phase2_seconds: f64,
    pub negative_mass_fraction: f64,
    pub diagnostics: SolveDiagnostics,
}

impl TrialReport {
    /// One `key=value` line per field.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format_f64(*x))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "model={}", self.model);
        let _ = writeln!(s, "grid.lower={}", join(self.spec.lower()));
        let _ = writeln!(s, "grid.upper={}", join(self.spec.upper()));
        let _ = writeln!(s, "grid.r={}", format_f64(self.spec.spacing()));
        let _ = writeln!(s, "grid.nodes={}", self.spec.len());
        let _ = writeln!(s, "sampler.dt={}", format_f64(self.sampler.dt));
        let _ = writeln!(s, "sampler.T={}", format_f64(self.sampler.horizon));
        let _ = writeln!(s, "sampler.burn_in={}", format_f64(self.sampler.burn_in));
        let _ = writeln!(s, "sampler.stride={}", self.sampler.stride);
        let _ = writeln!(s, "sampler.seed={}", self.sampler.seed);
        let _ = writeln!(s, "sampler.chains={}", self.sampler.chains);
        let _ = writeln!(s, "mass={}", format_f64(self.mass));
        let _ = writeln!(s, "mc_mass={}", format_f64(self.mc_mass));
        for (key, value) in [
            ("l2_error", self.l2_error),
            ("l2_error_euclidean", self.l2_error_euclidean),
            ("mc_l2_error", self.mc_l2_error),
            ("mc_l2_error_euclidean", self.mc_l2_error_euclidean),
        ] {
            if let Some(v) = value {
                let _ = writeln!(s, "{key}={}", format_f64(v));
            }
        }
        let _ = writeln!(s, "phase1_seconds={}", format_f64(self.phase1_seconds));
        let _ = writeln!(s, "phase2_seconds={}", format_f64(self.phase2_seconds));
        let _ = writeln!(
            s,
            "negative_mass_fraction={}",
            format_f64(self.negative_mass_fraction)
        );
        s.push_str(&self.diagnostics.to_key_values());
        s
    }
}

/// Output of [`run_hybrid`]: the corrected density, the histogram it started from, and the report.
#[derive(Debug, Clone)]
pub struct HybridRun {
    pub density: GridDensity,
    pub histogram: GridDensity,
    pub report: TrialReport,
}

impl HybridRun {
    /// Fills the error fields of the report against `reference`.
    pub fn score(&mut self, reference: &GridDensity) -> Result<()> {
        self.report.l2_error = Some(l2_error(&self.density, reference)?);
        self.report.l2_error_euclidean = Some(euclidean_error(&self.density, reference)?);
        self.report.mc_l2_error = Some(l2_error(&self.histogram, reference)?);
        self.report.mc_l2_error_euclidean = Some(euclidean_error(&self.histogram, reference)?);
        Ok(())
    }
}

/// Histogram, constraint assembly and minimum-norm correction, timed per phase.
pub fn run_hybrid(
    model: &SdeModel,
    spec: &GridSpec,
    sampler: &SamplerConfig,
    solver: &SolverOptions,
    mass_mode: MassMode,
) -> Result<HybridRun> {
    solver.validate()?;
    let t0 = Instant::now();
    let (histogram, mc_mass) = sample_histogram(model, sampler, spec)?;
    let phase1_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mass = match mass_mode {
        MassMode::MonteCarlo => mc_mass,
        MassMode::Full => 1.0,
    };
    let v = match mass_mode {
        MassMode::MonteCarlo => histogram.clone(),
        // Condition the histogram on the box so v and the constraint agree on mass.
        MassMode::Full => {
            let mut v = histogram.clone();
            v.values.iter_mut().for_each(|x| *x /= mc_mass);
            v.mass = 1.0;
            v
        }
    };
    let system = assemble_constraint_system(model, spec, mass)?;
    let (density, diagnostics) = min_norm_correction(&system, &v, solver)?;
    let phase2_seconds = t1.elapsed().as_secs_f64();

    let report = TrialReport {
        model: model.name().to_string(),
        spec: spec.clone(),
        sampler: sampler.clone(),
        mass,
        mc_mass,
        l2_error: None,
        l2_error_euclidean: None,
        mc_l2_error: None,
        mc_l2_error_euclidean: None,
        phase1_seconds,
        phase2_seconds,
        negative_mass_fraction: negative_mass_fraction(&density),
        diagnostics,
    };
    Ok(HybridRun {
        density,
        histogram: v,
        report,
    })
}

/// Discrete L² norm of `u - reference`: `sqrt(r^d sum (u_i - ref_i)²)`.
pub fn l2_error(u: &GridDensity, reference: &GridDensity) -> Result<f64> {
    Ok((u.spec.cell_volume() * squared_diff(u, reference)?).sqrt())
}

/// Unscaled Euclidean norm of `u - reference`.
pub fn euclidean_error(u: &GridDensity, reference: &GridDensity) -> Result<f64> {
    Ok(squared_diff(u, reference)?.sqrt())
}

fn squared_diff(u: &GridDensity, reference: &GridDensity) -> Result<f64> {
    u.spec.check_same(&reference.spec)?;
    Ok(u.values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// The analytic double-well density on a 1D grid, normalized like a hybrid
/// run with `mass_mode`: over the whole line, or conditioned on the box.
pub fn double_well_reference(
    spec: &GridSpec,
    sigma: f64,
    mass_mode: MassMode,
) -> Result<GridDensity> {
    if spec.dim() != 1 {
        return Err(FpError::SpecMismatch(format!(
            "double-well reference needs a 1D grid, got dimension {}",
            spec.dim()
        )));
    }
    let density = DoubleWellDensity::whole_line(sigma)?;
    let scale = match mass_mode {
        MassMode::MonteCarlo => 1.0,
        MassMode::Full => 1.0 / density.probability(spec.lower()[0], spec.upper()[0]),
    };
    GridDensity::from_fn(spec.clone(), Provenance::Analytic, |x| {
        scale * density.eval(x[0])
    })
}

/// Mean errors over trials; rows follow `t_list`, columns `h_list`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub t_list: Vec<f64>,
    pub h_list: Vec<f64>,
    /// Mean discrete L² error of the hybrid density.
    pub mean: Vec<Vec<f64>>,
    /// Mean discrete L² error of the Monte Carlo histogram.
    pub mc_mean: Vec<Vec<f64>>,
    /// Every trial report, row-major over (T, h, trial).
    pub reports: Vec<TrialReport>,
}

fn table_csv(label: &str, t_list: &[f64], h_list: &[f64], cells: &[Vec<f64>]) -> String {
    let mut s = String::from(label);
    for h in h_list {
        let _ = write!(s, ",h={h}");
    }
    s.push('\n');
    for (t, row) in t_list.iter().zip(cells) {
        let _ = write!(s, "{t}");
        for v in row {
            let _ = write!(s, ",{}", format_f64(*v));
        }
        s.push('\n');
    }
    s
}

impl ErrorTable {
    /// Hybrid means as CSV: a header row of spacings, then one row per horizon.
    pub fn to_csv(&self) -> String {
        table_csv("T", &self.t_list, &self.h_list, &self.mean)
    }

    /// Histogram means in the same layout.
    pub fn mc_to_csv(&self) -> String {
        table_csv("T", &self.t_list, &self.h_list, &self.mc_mean)
    }
}

/// Runs `trials` seeded hybrid pipelines per `(T, h)` cell and averages the
/// errors against `reference(spec)`. Trial `k` uses seed `base.seed + k`.
#[allow(clippy::too_many_arguments)]
pub fn error_table(
    model: &SdeModel,
    lower: &[f64],
    upper: &[f64],
    t_list: &[f64],
    h_list: &[f64],
    trials: usize,
    base: &SamplerConfig,
    solver: &SolverOptions,
    mass_mode: MassMode,
    reference: &(dyn Fn(&GridSpec) -> Result<GridDensity> + Sync),
) -> Result<ErrorTable> {
    if trials == 0 {
        return Err(FpError::param("trials must be >= 1"));
    }
    if t_list.is_empty() || h_list.is_empty() {
        return Err(FpError::param(
            "error table needs at least one horizon and one spacing",
        ));
    }
    let specs = h_list
        .iter()
        .map(|&h| GridSpec::new(lower.to_vec(), upper.to_vec(), h))
        .collect::<Result<Vec<_>>>()?;
    let references = specs.iter().map(reference).collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..t_list.len())
        .flat_map(|ti| (0..h_list.len()).flat_map(move |hi| (0..trials).map(move |k| (ti, hi, k))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(ti, hi, k)| {
            let sampler = SamplerConfig {
                horizon: t_list[ti],
                seed: base.seed.wrapping_add(k as u64),
                ..base.clone()
            };
            let mut run = run_hybrid(model, &specs[hi], &sampler, solver, mass_mode)?;
            run.score(&references[hi])?;
            Ok(run.report)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = vec![vec![0.0; h_list.len()]; t_list.len()];
    let mut mc_mean = mean.clone();
    for (&(ti, hi, _), rep) in jobs.iter().zip(&reports) {
        mean[ti][hi] += rep.l2_error.expect("scored") / trials as f64;
        mc_mean[ti][hi] += rep.mc_l2_error.expect("scored") / trials as f64;
    }
    Ok(ErrorTable {
        t_list: t_list.to_vec(),
        h_list: h_list.to_vec(),
        mean,
        mc_mean,
        reports,
    })
}

/// A density defined piecewise on disjoint boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedDensity {
    parts: Vec<GridDensity>,
}

fn interiors_overlap(a: &GridSpec, b: &GridSpec) -> bool {
    (0..a.dim()).all(|k| a.lower()[k] < b.upper()[k] && b.lower()[k] < a.upper()[k])
}

fn box_contains(spec: &GridSpec, point: &[f64]) -> bool {
    point
        .iter()
        .enumerate()
        .all(|(k, &x)| spec.lower()[k] <= x && x <= spec.upper()[k])
}

impl GluedDensity {
    pub fn parts(&self) -> &[GridDensity] {
        &self.parts
    }

    /// Value of the first part whose closed box contains `point`.
    pub fn lookup(&self, point: &[f64]) -> Option<f64> {
        self.parts
            .iter()
            .find(|p| box_contains(&p.spec, point))
            .and_then(|p| p.lookup(point))
    }

    /// Sum of the parts' `r^d sum(u)`.
    pub fn integral(&self) -> f64 {
        self.parts.iter().map(GridDensity::integral).sum()
    }
}

/// Rescales each unit-mass part by its probability `mass_k`.
pub fn glue_subdomains(parts: Vec<(GridDensity, f64)>) -> Result<GluedDensity> {
    if parts.is_empty() {
        return Err(FpError::param("nothing to glue"));
    }
    let dim = parts[0].0.spec.dim();
    for (k, (part, mass)) in parts.iter().enumerate() {
        if !(mass.is_finite() && *mass >= 0.0) {
            return Err(FpError::param(format!("part {k} has invalid mass {mass}")));
        }
        if part.spec.dim() != dim {
            return Err(FpError::SpecMismatch(format!(
                "part {k} has dimension {}, part 0 has {dim}",
                part.spec.dim()
            )));
        }
    }
    for a in 0..parts.len() {
        for b in a + 1..parts.len() {
            if interiors_overlap(&parts[a].0.spec, &parts[b].0.spec) {
                return Err(FpError::Overlap {
                    first: a,
                    second: b,
                });
            }
        }
    }
    let parts = parts
        .into_iter()
        .map(|(mut part, mass)| {
            part.values.iter_mut().for_each(|v| *v *= mass);
            part.mass *= mass;
            part
        })
        .collect();
    Ok(GluedDensity { parts })
}

/// Cuts `spec` into `parts` equal slabs along `axis`, sharing faces.
pub fn split_domain(spec: &GridSpec, parts: usize, axis: usize) -> Result<Vec<GridSpec>> {
    if axis >= spec.dim() {
        return Err(FpError::param(format!(
            "axis {axis} out of range for dimension {}",
            spec.dim()
        )));
    }
    let steps = spec.counts()[axis] - 1;
    if parts == 0 || !steps.is_multiple_of(parts) {
        return Err(FpError::param(format!(
            "{steps} grid steps along axis {axis} do not split into {parts} equal parts"
        )));
    }
    let per = steps / parts;
    (0..parts)
        .map(|k| {
            let mut lower = spec.lower().to_vec();
            let mut upper = spec.upper().to_vec();
            lower[axis] = spec.node_coord(axis, k * per);
            upper[axis] = spec.node_coord(axis, (k + 1) * per);
            GridSpec::new(lower, upper, spec.spacing())
        })
        .collect()
}

/// Solves every slab of `spec` with unit mass (part `k` sampled with seed
/// `sampler.seed + k`) and glues them with their Monte Carlo masses.
pub fn run_glued(
    model: &SdeModel,
    spec: &GridSpec,
    parts: usize,
    axis: usize,
    sampler: &SamplerConfig,
    solver: &SolverOptions,
) -> Result<(GluedDensity, Vec<HybridRun>)> {
    let specs = split_domain(spec, parts, axis)?;
    let runs = specs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let cfg = SamplerConfig {
                seed: sampler.seed.wrapping_add(k as u64),
                ..sampler.clone()
            };
            run_hybrid(model, s, &cfg, solver, MassMode::Full)
        })
        .collect::<Result<Vec<_>>>()?;
    let glued = glue_subdomains(
        runs.iter()
            .map(|r| (r.density.clone(), r.report.mc_mass))
            .collect(),
    )?;
    Ok((glued, runs))
}

/// Centre of the most occupied cell of a coarse histogram of `samples`
/// (grid coordinates, `dim` values per state). Ties go to the smallest cell index.
pub fn top_occupancy_center(samples: &[f64], dim: usize, spacing: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(FpError::EmptyHistogram);
    }
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    for state in samples.chunks_exact(dim) {
        let cell: Vec<i64> = state.iter().map(|x| (x / spacing).floor() as i64).collect();
        *counts.entry(cell).or_default() += 1;
    }
    let (cell, _) = counts
        .iter()
        .fold(None::<(&Vec<i64>, u64)>, |best, (c, &n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((c, n)),
        })
        .expect("non-empty");
    Ok(cell.iter().map(|&i| (i as f64 + 0.5) * spacing).collect())
}

/// Horizon of the pilot run that places a local box.
pub const PILOT_HORIZON: f64 = 200.0;

/// Centre of a local box from a short pilot run with the same sampler settings.
pub fn pilot_center(model: &SdeModel, sampler: &SamplerConfig, spacing: f64) -> Result<Vec<f64>> {
    let pilot = SamplerConfig {
        horizon: sampler.horizon.min(PILOT_HORIZON + sampler.burn_in),
        ..sampler.clone()
    };
    let samples = collect_samples(model, &pilot)?;
    top_occupancy_center(&samples, model.dim(), spacing)
}

/// `w_ij = r sum_k u_ijk` on the grid of the first two axes.
pub fn z_marginal(u: &GridDensity) -> Result<GridDensity> {
    let spec = &u.spec;
    if spec.dim() != 3 {
        return Err(FpError::param(format!(
            "z-marginal needs a 3D grid, got dimension {}",
            spec.dim()
        )));
    }
    let plane = GridSpec::new(
        spec.lower()[..2].to_vec(),
        spec.upper()[..2].to_vec(),
        spec.spacing(),
    )?;
    let nz = spec.counts()[2];
    let r = spec.spacing();
    let values: Vec<f64> = u
        .values
        .chunks_exact(nz)
        .map(|col| r * col.iter().sum::<f64>())
        .collect();
    GridDensity::new(plane, values, u.provenance, u.sample_count, u.mass)
}

/// A hybrid run on a local 3D box together with its z-marginal.
#[derive(Debug, Clone)]
pub struct LocalRun {
    pub run: HybridRun,
    pub marginal: GridDensity,
    pub center: Vec<f64>,
}

/// Places a box of `extent` (at `center`, or by a pilot run) and solves it
/// with the iterative method unless a method was chosen explicitly.
#[allow(clippy::too_many_arguments)]
pub fn run_3d_local(
    model: &SdeModel,
    extent: &[f64],
    center: Option<&[f64]>,
    r: f64,
    pilot_spacing: f64,
    sampler: &SamplerConfig,
    solver: &SolverOptions,
) -> Result<LocalRun> {
    if model.dim() != 3 || extent.len() != 3 {
        return Err(FpError::param(format!(
            "local boxes need a 3D model, got model dimension {} and extent of length {}",
            model.dim(),
            extent.len()
        )));
    }
    let center = match center {
        Some(c) => c.to_vec(),
        None => pilot_center(model, sampler, pilot_spacing)?,
    };
    let spec = local_box(&center, extent, r)?;
    let mut opts = solver.clone();
    if opts.method == SolverMethod::Auto {
        opts.method = SolverMethod::IterativeCgne;
    }
    let run = run_hybrid(model, &spec, sampler, &opts, MassMode::MonteCarlo)?;
    let marginal = z_marginal(&run.density)?;
    Ok(LocalRun {
        run,
        marginal,
        center,
    })
}

/// Parameter at which the deterministic Van der Pol system has a relaxation
/// oscillation for `epsilon = 0.1`; used when the requested `a` sits on the
/// small-cycle side of the canard explosion.
pub const RELAXATION_REFERENCE_A: f64 = 0.9;

/// One period of the deterministic Van der Pol limit cycle, by RK4 with step
/// `h` after a transient of `transient` time units from `(2, 0)`.
pub fn van_der_pol_cycle(p: &VanDerPolParams, h: f64, transient: f64) -> Result<Vec<[f64; 2]>> {
    if !(h > 0.0 && transient >= 0.0 && p.epsilon > 0.0) {
        return Err(FpError::param(
            "cycle integration needs h > 0, transient >= 0, epsilon > 0",
        ));
    }
    let f = |s: [f64; 2]| [(s[1] - s[0].powi(3) / 3.0 + s[0]) / p.epsilon, p.a - s[0]];
    let step = |s: [f64; 2]| {
        let k1 = f(s);
        let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
        let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
        let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]]);
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let mut s = [2.0, 0.0];
    for _ in 0..(transient / h).ceil() as u64 {
        s = step(s);
    }
    // Record from one upward crossing of the equilibrium level y0 to the next;
    // y rises only while x < a, so there is one such crossing per period.
    let y0 = p.a.powi(3) / 3.0 - p.a;
    let crosses = |a: [f64; 2], b: [f64; 2]| a[1] < y0 && b[1] >= y0;
    let max_steps = (1000.0 / h) as u64;
    let mut found = false;
    for _ in 0..max_steps {
        let next = step(s);
        let hit = crosses(s, next);
        s = next;
        if hit {
            found = true;
            break;
        }
    }
    if !found {
        return Err(FpError::param("trajectory settled without oscillating"));
    }
    let mut cycle = vec![s];
    for _ in 0..max_steps {
        let next = step(s);
        let hit = crosses(s, next);
        s = next;
        cycle.push(s);
        if hit {
            return Ok(cycle);
        }
    }
    Err(FpError::param(
        "cycle did not close within the integration budget",
    ))
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Share of the positive part of `u` on nodes within `radius` of the closed polyline `curve`.
pub fn mass_near_curve(u: &GridDensity, curve: &[[f64; 2]], radius: f64) -> Result<f64> {
    if u.spec.dim() != 2 {
        return Err(FpError::NotTwoDimensional(u.spec.dim()));
    }
    if curve.len() < 2 {
        return Err(FpError::param("curve needs at least two points"));
    }
    let spec = &u.spec;
    let (near, total) = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let w = u.values[k].max(0.0);
            if w == 0.0 {
                return (0.0, 0.0);
            }
            let mut x = [0.0; 2];
            spec.node_position(k, &mut x);
            let close = curve
                .windows(2)
                .any(|seg| distance_to_segment(x, seg[0], seg[1]) <= radius);
            (if close { w } else { 0.0 }, w)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0.0 {
        return Err(FpError::EmptyDensity);
    }
    Ok(near / total)
}

/// Runs the pipeline once as a discarded warm-up, then again for the reported timings.
pub fn timed_hybrid(
    model: &SdeModel,
    spec: &GridSpec,
    sampler: &SamplerConfig,
    solver: &SolverOptions,
    mass_mode: MassMode,
) -> Result<HybridRun> {
    run_hybrid(model, spec, sampler, solver, mass_mode)?;
    run_hybrid(model, spec, sampler, solver, mass_mode)
}
