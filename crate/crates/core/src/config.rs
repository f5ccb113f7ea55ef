//! INI-style run configuration.
//!
//! ```text
//! [model]
//! name = double-well
//! sigma = 0.6
//!
//! [domain]
//! lower = 0
//! upper = 2
//! r = 0.005
//! ```
//!
//! Lines are `key = value` pairs under `[section]` headers; lines starting
//! with `#` or `;` are comments. Vectors are comma-separated decimals. Parsing
//! is strict: unknown keys, duplicate keys and malformed numbers are errors
//! carrying the 1-based line number (line 0 when the problem is a missing
//! section). `[model]` and `[domain]` are required; every other section falls
//! back to documented defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{FpError, Result};
use crate::grid::GridSpec;
use crate::model::{registry_entry, ModelParams, SdeModel};
use crate::sampler::SamplerConfig;
use crate::solver::{Postprocess, SolverMethod, SolverOptions};

/// `[model]`: registry name plus its numeric parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub name: String,
    pub params: ModelParams,
}

impl ModelSection {
    pub fn build(&self) -> Result<SdeModel> {
        registry_entry(&self.name)?.build(&self.params)
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(registry_entry(&self.name)?.dim)
    }
}

/// Where the grid box sits.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainBox {
    /// Explicit corners, in grid coordinates.
    Fixed { lower: Vec<f64>, upper: Vec<f64> },
    /// A box of the given extent, centred at `center` or, when absent, on the
    /// highest-occupancy cell of a coarse pilot histogram.
    Local {
        extent: Vec<f64>,
        center: Option<Vec<f64>>,
    },
}

/// `[domain]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSection {
    pub bounds: DomainBox,
    pub r: f64,
    /// Cell size of the pilot histogram used to place `Local` boxes.
    pub pilot_spacing: f64,
}

pub const DEFAULT_PILOT_SPACING: f64 = 1.0;

impl DomainSection {
    /// The grid for a `Fixed` box; `Local` boxes need a center first.
    pub fn fixed_spec(&self) -> Result<GridSpec> {
        match &self.bounds {
            DomainBox::Fixed { lower, upper } => {
                GridSpec::new(lower.clone(), upper.clone(), self.r)
            }
            DomainBox::Local {
                extent,
                center: Some(c),
            } => local_box(c, extent, self.r),
            DomainBox::Local { center: None, .. } => Err(FpError::param(
                "domain box has no fixed corners; it is placed by a pilot run",
            )),
        }
    }

    fn dim(&self) -> usize {
        match &self.bounds {
            DomainBox::Fixed { lower, .. } => lower.len(),
            DomainBox::Local { extent, .. } => extent.len(),
        }
    }
}

/// Grid of extent `extent` centred at `center`, with corners snapped to multiples of `r`.
pub fn local_box(center: &[f64], extent: &[f64], r: f64) -> Result<GridSpec> {
    if center.len() != extent.len() {
        return Err(FpError::param(format!(
            "center has {} entries, extent has {}",
            center.len(),
            extent.len()
        )));
    }
    let lower: Vec<f64> = center
        .iter()
        .zip(extent)
        .map(|(c, e)| ((c - 0.5 * e) / r).round() * r)
        .collect();
    let upper: Vec<f64> = lower.iter().zip(extent).map(|(l, e)| l + e).collect();
    GridSpec::new(lower, upper, r)
}

/// `[output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    /// Primary artifact (`.fpgrid`, CSV table, ...); the CLI `--output` overrides it.
    pub path: Option<String>,
    /// Optional CSV export of the density.
    pub csv: Option<String>,
    /// Optional PGM heatmap (2D results, or the z-marginal of 3D results).
    pub pgm: Option<String>,
    pub postprocess: Postprocess,
    /// Normalize the grid to mass 1 instead of the Monte Carlo in-domain mass.
    pub full_mass: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            path: None,
            csv: None,
            pgm: None,
            postprocess: Postprocess::Raw,
            full_mass: false,
        }
    }
}

/// `[experiment]`: parameters of the multi-run commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    /// Horizons of the error table rows.
    pub t_list: Vec<f64>,
    /// Grid spacings of the error table columns.
    pub h_list: Vec<f64>,
    pub trials: usize,
    /// Number of equal slabs the `glue` command cuts the domain into.
    pub glue_parts: usize,
    pub glue_axis: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            t_list: vec![500.0, 1000.0, 2000.0, 4000.0],
            h_list: vec![0.04, 0.02, 0.01, 0.005],
            trials: 5,
            glue_parts: 2,
            glue_axis: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub domain: DomainSection,
    pub sampler: SamplerConfig,
    pub solver: SolverOptions,
    pub output: OutputSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn reject_leftovers(&self, name: &str) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((key, e)) => Err(FpError::Config {
                line: e.line,
                message: format!("unknown key {key:?} in [{name}]"),
            }),
        }
    }

    fn required(&mut self, key: &str, name: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| FpError::Config {
            line: self.line,
            message: format!("missing key {key:?} in [{name}]"),
        })
    }
}

fn config_err(line: usize, message: impl Into<String>) -> FpError {
    FpError::Config {
        line,
        message: message.into(),
    }
}

fn parse_f64(e: &Entry) -> Result<f64> {
    match e.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(config_err(
            e.line,
            format!("malformed number {:?}", e.value),
        )),
    }
}

fn parse_vec(e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|part| {
            let part = part.trim();
            match part.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(config_err(e.line, format!("malformed number {part:?}"))),
            }
        })
        .collect()
}

fn parse_int<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse::<T>()
        .map_err(|_| config_err(e.line, format!("malformed integer {:?}", e.value)))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(config_err(
            e.line,
            format!("expected true or false, got {other:?}"),
        )),
    }
}

/// Re-raises a validation failure against the line of the offending key.
fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        FpError::Config { .. } => e,
        other => config_err(line, other.to_string()),
    })
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(line, "unterminated section header"))?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(config_err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(config_err(line, format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| config_err(line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(config_err(line, "empty key"));
        }
        let section = current
            .as_ref()
            .ok_or_else(|| config_err(line, "key outside of any section"))?;
        let entries = &mut sections
            .get_mut(section)
            .expect("section registered")
            .entries;
        if let Some(prev) = entries.get(&key) {
            return Err(config_err(
                line,
                format!("duplicate key {key:?} (first set on line {})", prev.line),
            ));
        }
        entries.insert(key, Entry { value, line });
    }
    Ok(sections)
}

const SECTIONS: &[&str] = &[
    "model",
    "domain",
    "sampler",
    "solver",
    "output",
    "experiment",
];

fn parse_model(mut s: Section) -> Result<ModelSection> {
    let name_entry = s.required("name", "model")?;
    let entry = at_line(name_entry.line, registry_entry(&name_entry.value))?;
    let mut params = ModelParams::new();
    let allowed = entry.keys.iter().copied().chain(["rotation", "offset"]);
    for key in allowed {
        if let Some(e) = s.take(key) {
            params.insert(key.to_string(), parse_vec(&e)?);
        }
    }
    s.reject_leftovers("model")?;
    let section = ModelSection {
        name: name_entry.value,
        params,
    };
    at_line(name_entry.line, section.build())?;
    Ok(section)
}

fn parse_domain(mut s: Section) -> Result<DomainSection> {
    let r_entry = s.required("r", "domain")?;
    let r = parse_f64(&r_entry)?;
    let lower = s.take("lower");
    let upper = s.take("upper");
    let extent = s.take("extent");
    let center = s.take("center");
    let pilot_spacing = match s.take("pilot_spacing") {
        Some(e) => {
            let v = parse_f64(&e)?;
            if v <= 0.0 {
                return Err(config_err(e.line, "pilot_spacing must be positive"));
            }
            v
        }
        None => DEFAULT_PILOT_SPACING,
    };
    s.reject_leftovers("domain")?;
    let bounds = match (lower, upper, extent) {
        (Some(lo), Some(hi), None) => {
            if let Some(c) = center {
                return Err(config_err(
                    c.line,
                    "center applies only to boxes given by extent",
                ));
            }
            DomainBox::Fixed {
                lower: parse_vec(&lo)?,
                upper: parse_vec(&hi)?,
            }
        }
        (None, None, Some(ext)) => DomainBox::Local {
            extent: parse_vec(&ext)?,
            center: center.as_ref().map(parse_vec).transpose()?,
        },
        _ => {
            return Err(config_err(
                s.line,
                "[domain] needs either both lower and upper, or extent",
            ))
        }
    };
    let domain = DomainSection {
        bounds,
        r,
        pilot_spacing,
    };
    // Validate the geometry through the same constructor the pipeline uses.
    let check = match &domain.bounds {
        DomainBox::Fixed { .. } => domain.fixed_spec().map(|_| ()),
        DomainBox::Local { extent, center } => {
            let origin = vec![0.0; extent.len()];
            let spec = GridSpec::new(origin, extent.clone(), r).map(|_| ());
            match center {
                Some(c) if c.len() != extent.len() => Err(FpError::param(format!(
                    "center has {} entries, extent has {}",
                    c.len(),
                    extent.len()
                ))),
                _ => spec,
            }
        }
    };
    at_line(r_entry.line, check)?;
    Ok(domain)
}

fn parse_sampler(s: Option<Section>) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig::default();
    let Some(mut s) = s else {
        return Ok(cfg);
    };
    if let Some(e) = s.take("dt") {
        cfg.dt = parse_f64(&e)?;
    }
    if let Some(e) = s.take("T") {
        cfg.horizon = parse_f64(&e)?;
    }
    if let Some(e) = s.take("burn_in") {
        cfg.burn_in = parse_f64(&e)?;
    }
    if let Some(e) = s.take("stride") {
        cfg.stride = parse_int(&e)?;
    }
    if let Some(e) = s.take("seed") {
        cfg.seed = parse_int(&e)?;
    }
    if let Some(e) = s.take("chains") {
        cfg.chains = parse_int(&e)?;
    }
    if let Some(e) = s.take("initial_state") {
        cfg.initial_state = Some(parse_vec(&e)?);
    }
    s.reject_leftovers("sampler")?;
    at_line(s.line, cfg.validate())?;
    Ok(cfg)
}

fn parse_solver(s: Option<Section>) -> Result<SolverOptions> {
    let mut opts = SolverOptions::default();
    let Some(mut s) = s else {
        return Ok(opts);
    };
    if let Some(e) = s.take("method") {
        opts.method = at_line(e.line, e.value.parse::<SolverMethod>())?;
    }
    if let Some(e) = s.take("tol") {
        opts.tol = parse_f64(&e)?;
    }
    if let Some(e) = s.take("max_iter") {
        opts.max_iter = Some(parse_int(&e)?);
    }
    if let Some(e) = s.take("auto_threshold") {
        opts.auto_threshold = parse_int(&e)?;
    }
    s.reject_leftovers("solver")?;
    at_line(s.line, opts.validate())?;
    Ok(opts)
}

fn parse_output(s: Option<Section>) -> Result<OutputSection> {
    let mut out = OutputSection::default();
    let Some(mut s) = s else {
        return Ok(out);
    };
    out.path = s.take("path").map(|e| e.value);
    out.csv = s.take("csv").map(|e| e.value);
    out.pgm = s.take("pgm").map(|e| e.value);
    if let Some(e) = s.take("postprocess") {
        out.postprocess = at_line(e.line, e.value.parse::<Postprocess>())?;
    }
    if let Some(e) = s.take("full_mass") {
        out.full_mass = parse_bool(&e)?;
    }
    s.reject_leftovers("output")?;
    Ok(out)
}

fn parse_experiment(s: Option<Section>) -> Result<ExperimentSection> {
    let mut ex = ExperimentSection::default();
    let Some(mut s) = s else {
        return Ok(ex);
    };
    if let Some(e) = s.take("t_list") {
        ex.t_list = parse_vec(&e)?;
        if ex.t_list.iter().any(|t| *t <= 0.0) {
            return Err(config_err(e.line, "t_list entries must be positive"));
        }
    }
    if let Some(e) = s.take("h_list") {
        ex.h_list = parse_vec(&e)?;
        if ex.h_list.iter().any(|h| *h <= 0.0) {
            return Err(config_err(e.line, "h_list entries must be positive"));
        }
    }
    if let Some(e) = s.take("trials") {
        ex.trials = parse_int(&e)?;
        if ex.trials == 0 {
            return Err(config_err(e.line, "trials must be >= 1"));
        }
    }
    if let Some(e) = s.take("glue_parts") {
        ex.glue_parts = parse_int(&e)?;
        if ex.glue_parts == 0 {
            return Err(config_err(e.line, "glue_parts must be >= 1"));
        }
    }
    if let Some(e) = s.take("glue_axis") {
        ex.glue_axis = parse_int(&e)?;
    }
    s.reject_leftovers("experiment")?;
    Ok(ex)
}

/// Parses and fully validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut sections = split_sections(text)?;
    let model = parse_model(
        sections
            .remove("model")
            .ok_or_else(|| config_err(0, "missing section [model]"))?,
    )?;
    let domain_section = sections
        .remove("domain")
        .ok_or_else(|| config_err(0, "missing section [domain]"))?;
    let domain_line = domain_section.line;
    let domain = parse_domain(domain_section)?;
    let dim = model.dim()?;
    if domain.dim() != dim {
        return Err(config_err(
            domain_line,
            format!(
                "domain has dimension {}, model {} has {dim}",
                domain.dim(),
                model.name
            ),
        ));
    }
    let sampler_line = sections.get("sampler").map_or(0, |s| s.line);
    let sampler = parse_sampler(sections.remove("sampler"))?;
    if let Some(s) = &sampler.initial_state {
        if s.len() != dim {
            return Err(config_err(
                sampler_line,
                format!(
                    "initial_state has {} entries, model dimension is {dim}",
                    s.len()
                ),
            ));
        }
    }
    let solver = parse_solver(sections.remove("solver"))?;
    let output = parse_output(sections.remove("output"))?;
    let experiment_line = sections.get("experiment").map_or(0, |s| s.line);
    let experiment = parse_experiment(sections.remove("experiment"))?;
    if experiment.glue_axis >= dim {
        return Err(config_err(
            experiment_line,
            format!(
                "glue_axis {} out of range for dimension {dim}",
                experiment.glue_axis
            ),
        ));
    }
    Ok(RunConfig {
        model,
        domain,
        sampler,
        solver,
        output,
        experiment,
    })
}

/// Formats a float with 17 significant digits, so re-parsing is exact.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format_f64(*x))
        .collect::<Vec<_>>()
        .join(",")
}

/// Writes every field explicitly; `parse_config(&serialize_config(c)) == c`.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[model]\nname = {}", cfg.model.name);
    for (k, v) in &cfg.model.params {
        let _ = writeln!(s, "{k} = {}", format_vec(v));
    }

    s.push_str("\n[domain]\n");
    match &cfg.domain.bounds {
        DomainBox::Fixed { lower, upper } => {
            let _ = writeln!(
                s,
                "lower = {}\nupper = {}",
                format_vec(lower),
                format_vec(upper)
            );
        }
        DomainBox::Local { extent, center } => {
            let _ = writeln!(s, "extent = {}", format_vec(extent));
            if let Some(c) = center {
                let _ = writeln!(s, "center = {}", format_vec(c));
            }
        }
    }
    let _ = writeln!(
        s,
        "r = {}\npilot_spacing = {}",
        format_f64(cfg.domain.r),
        format_f64(cfg.domain.pilot_spacing)
    );

    let sm = &cfg.sampler;
    let _ = writeln!(
        s,
        "\n[sampler]\ndt = {}\nT = {}\nburn_in = {}\nstride = {}\nseed = {}\nchains = {}",
        format_f64(sm.dt),
        format_f64(sm.horizon),
        format_f64(sm.burn_in),
        sm.stride,
        sm.seed,
        sm.chains
    );
    if let Some(x0) = &sm.initial_state {
        let _ = writeln!(s, "initial_state = {}", format_vec(x0));
    }

    let so = &cfg.solver;
    let _ = writeln!(
        s,
        "\n[solver]\nmethod = {}\ntol = {}\nauto_threshold = {}",
        so.method,
        format_f64(so.tol),
        so.auto_threshold
    );
    if let Some(m) = so.max_iter {
        let _ = writeln!(s, "max_iter = {m}");
    }

    let out = &cfg.output;
    s.push_str("\n[output]\n");
    for (key, value) in [("path", &out.path), ("csv", &out.csv), ("pgm", &out.pgm)] {
        if let Some(v) = value {
            let _ = writeln!(s, "{key} = {v}");
        }
    }
    let _ = writeln!(
        s,
        "postprocess = {}\nfull_mass = {}",
        out.postprocess, out.full_mass
    );

    let ex = &cfg.experiment;
    let _ = writeln!(
        s,
        "\n[experiment]\nt_list = {}\nh_list = {}\ntrials = {}\nglue_parts = {}\nglue_axis = {}",
        format_vec(&ex.t_list),
        format_vec(&ex.h_list),
        ex.trials,
        ex.glue_parts,
        ex.glue_axis
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "[model]\nname = double-well\n\n[domain]\nlower = 0\nupper = 2\nr = 0.005\n";

    fn line_of(err: FpError) -> usize {
        match err {
            FpError::Config { line, .. } => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.sampler.dt, 0.001);
        assert_eq!(cfg.sampler.burn_in, 10.0);
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.output, OutputSection::default());
        assert_eq!(cfg.domain.r, 0.005);
        assert_eq!(cfg.domain.fixed_spec().unwrap().counts(), &[401]);
    }

    #[test]
    fn spacing_under_domain() {
        let text = "[model]\nname = van-der-pol\n[domain]\nlower = -2.5, -2.5\nupper = 2.5,2.5\nr = 0.05\n";
        assert_eq!(parse_config(text).unwrap().domain.r, 0.05);
    }

    #[test]
    fn duplicate_key_names_its_line() {
        let text = format!("{MINIMAL}r = 0.01\n");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 8);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text =
            "[model]\nname = double-well\nsigmma = 0.5\n[domain]\nlower = 0\nupper = 2\nr = 0.5\n";
        assert_eq!(line_of(parse_config(text).unwrap_err()), 3);
    }

    #[test]
    fn malformed_number_names_its_line() {
        let text = MINIMAL.replace("upper = 2", "upper = 2.x");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 6);
    }

    #[test]
    fn missing_section_is_reported() {
        let err = parse_config("[model]\nname = double-well\n").unwrap_err();
        assert!(err.to_string().contains("missing section [domain]"));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = MINIMAL.replace("double-well", "lorenz");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 4);
    }

    #[test]
    fn local_box_snaps_to_grid() {
        let spec = local_box(&[1.03, -0.02, 24.0], &[5.0, 5.0, 1.0], 0.05).unwrap();
        assert_eq!(spec.counts(), &[101, 101, 21]);
        assert!((spec.lower()[0] - -1.45).abs() < 1e-12);
    }

    #[test]
    fn serialize_round_trips_full_config() {
        let text = "[model]\nname = lorenz\nsigma = 0.3\nrotation = 0,1,0, -1,0,0, 0,0,1\n\
                    [domain]\nextent = 5,5,1\nr = 0.05\n\
                    [sampler]\nT = 100\nseed = 7\nchains = 4\ninitial_state = 1,2,3\n\
                    [solver]\nmethod = iterative-cgne\ntol = 1e-8\nmax_iter = 50000\n\
                    [output]\npath = out.fpgrid\npgm = out.pgm\npostprocess = clamp\nfull_mass = true\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }
}
