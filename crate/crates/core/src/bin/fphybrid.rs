use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use fphybrid::config::{parse_config, DomainBox, RunConfig};
use fphybrid::error::EXIT_CODES;
use fphybrid::experiments::{
    double_well_reference, error_table, mass_near_curve, run_3d_local, run_glued, run_hybrid,
    van_der_pol_cycle, HybridRun, MassMode, RELAXATION_REFERENCE_A,
};
use fphybrid::grid::GridDensity;
use fphybrid::io::{
    read_grid, write_atomic, write_csv, write_grid, write_matrix, write_pgm, write_vector,
};
use fphybrid::model::VanDerPolParams;
use fphybrid::operator::assemble_constraint_system;
use fphybrid::sampler::sample_histogram;
use fphybrid::solver::{min_norm_correction, postprocess_density, Postprocess};
use fphybrid::{FpError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fphybrid",
    version,
    about = "Invariant densities of stochastic ODEs: Monte Carlo histograms corrected by a boundary-free Fokker-Planck constraint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by the pipeline commands.
#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (INI-style).
    #[arg(long)]
    config: PathBuf,
    /// Primary output path; defaults to `[output] path`, then a per-command name.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sampler seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Normalize the grid to mass 1 instead of the Monte Carlo in-domain mass.
    #[arg(long, action = ArgAction::SetTrue)]
    full_mass: bool,
    /// Treatment of negative entries in the result.
    #[arg(long, value_parser = parse_postprocess)]
    postprocess: Option<Postprocess>,
}

fn parse_postprocess(s: &str) -> std::result::Result<Postprocess, String> {
    s.parse().map_err(|e: FpError| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RenderFormat {
    Pgm,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo histogram of the configured model on the configured grid.
    Sample(Common),
    /// Writes the constraint matrix (coordinate format) and right-hand side.
    Assemble {
        #[command(flatten)]
        common: Common,
        /// Mass of the normalization row (ignored with --full-mass, which uses 1).
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
    },
    /// Corrects an existing histogram file with the constraint system.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Histogram `.fpgrid` produced by `sample`.
        #[arg(long)]
        histogram: PathBuf,
    },
    /// Full pipeline: sample, assemble, solve; prints a key=value report.
    Hybrid(Common),
    /// Mean L2 errors over seeded trials for each (T, h) pair (double-well only).
    ErrorTable {
        #[command(flatten)]
        common: Common,
        /// Trials per cell; defaults to `[experiment] trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Solves equal slabs of the domain separately and glues them by mass.
    Glue(Common),
    /// Renders a 2D `.fpgrid` as a 16-bit PGM heatmap or a CSV table.
    Render {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = RenderFormat::Pgm)]
        format: RenderFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code_help() -> String {
    let mut s = String::from(
        "Exit codes:\n  0  success\n  1  unexpected failure\n  2  command-line usage error\n",
    );
    for (class, code) in EXIT_CODES {
        s.push_str(&format!("  {code:<2} {class}\n"));
    }
    s.push_str(
        "\nOn failure a single line `error class=<class> code=<n> message=<text>` is written to stderr.\n\
         FP_HYBRID_THREADS caps the worker threads (0 = all cores).",
    );
    s
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FP_HYBRID_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        FpError::Parameter(format!("FP_HYBRID_THREADS must be an integer, got {raw:?}"))
    })?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| FpError::Parameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

struct Run {
    cfg: RunConfig,
    output: PathBuf,
    mass_mode: MassMode,
    postprocess: Postprocess,
}

fn load(common: &Common, default_output: &str) -> Result<Run> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| FpError::Io {
        path: common.config.clone(),
        source: e,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.sampler.seed = seed;
    }
    if common.full_mass {
        cfg.output.full_mass = true;
    }
    if let Some(p) = common.postprocess {
        cfg.output.postprocess = p;
    }
    let output = common
        .output
        .clone()
        .or_else(|| cfg.output.path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default_output));
    Ok(Run {
        mass_mode: if cfg.output.full_mass {
            MassMode::Full
        } else {
            MassMode::MonteCarlo
        },
        postprocess: cfg.output.postprocess,
        output,
        cfg,
    })
}

fn write_extras(cfg: &RunConfig, density: &GridDensity) -> Result<()> {
    if let Some(path) = &cfg.output.csv {
        write_csv(path, density)?;
    }
    if let Some(path) = &cfg.output.pgm {
        write_pgm(path, density)?;
    }
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_sample(common: &Common) -> Result<()> {
    let run = load(common, "histogram.fpgrid")?;
    let model = run.cfg.model.build()?;
    let spec = run.cfg.domain.fixed_spec()?;
    let (v, mass) = sample_histogram(&model, &run.cfg.sampler, &spec)?;
    write_grid(&run.output, &v)?;
    write_extras(&run.cfg, &v)?;
    println!("mc_mass={}", fphybrid::config::format_f64(mass));
    println!("sample_count={}", v.sample_count);
    Ok(())
}

fn cmd_assemble(common: &Common, mass: f64) -> Result<()> {
    let run = load(common, "system.coo")?;
    let model = run.cfg.model.build()?;
    let spec = run.cfg.domain.fixed_spec()?;
    let mass = if run.mass_mode == MassMode::Full {
        1.0
    } else {
        mass
    };
    let sys = assemble_constraint_system(&model, &spec, mass)?;
    write_matrix(&run.output, &sys.matrix)?;
    let rhs_path = sidecar(&run.output, ".rhs");
    write_vector(&rhs_path, &sys.rhs)?;
    println!("rows={}", sys.matrix.nrows());
    println!("cols={}", sys.matrix.ncols());
    println!("nnz={}", sys.matrix.nnz());
    println!("rhs={}", rhs_path.display());
    Ok(())
}

fn cmd_solve(common: &Common, histogram: &Path) -> Result<()> {
    let run = load(common, "solution.fpgrid")?;
    let model = run.cfg.model.build()?;
    let mut v = read_grid(histogram)?;
    let mass = match run.mass_mode {
        MassMode::Full => {
            let inside = v.mass;
            if inside.is_nan() || inside <= 0.0 {
                return Err(FpError::EmptyHistogram);
            }
            v.values.iter_mut().for_each(|x| *x /= inside);
            v.mass = 1.0;
            1.0
        }
        MassMode::MonteCarlo => v.mass,
    };
    let sys = assemble_constraint_system(&model, &v.spec, mass)?;
    let (u, diag) = min_norm_correction(&sys, &v, &run.cfg.solver)?;
    let u = postprocess_density(&u, run.postprocess)?;
    write_grid(&run.output, &u)?;
    write_extras(&run.cfg, &u)?;
    print!("{}", diag.to_key_values());
    Ok(())
}

fn finish_hybrid(run: &Run, mut result: HybridRun) -> Result<()> {
    let cfg = &run.cfg;
    if cfg.model.name == "double-well" && result.density.spec.dim() == 1 {
        let sigma = cfg.model.params.get("sigma").map_or(0.6, |v| v[0]);
        let reference = double_well_reference(&result.density.spec, sigma, run.mass_mode)?;
        result.score(&reference)?;
    }
    let u = postprocess_density(&result.density, run.postprocess)?;
    print!("{}", result.report.to_key_values());
    if cfg.model.name == "van-der-pol" && !cfg.model.params.contains_key("rotation") {
        let defaults = VanDerPolParams::default();
        let params = VanDerPolParams {
            epsilon: cfg
                .model
                .params
                .get("epsilon")
                .map_or(defaults.epsilon, |v| v[0]),
            a: RELAXATION_REFERENCE_A,
            sigma: 0.0,
        };
        if let Ok(cycle) = van_der_pol_cycle(&params, 1e-4, 20.0) {
            let share = mass_near_curve(&u, &cycle, 0.25)?;
            println!(
                "relaxation_cycle_mass_0.25={}",
                fphybrid::config::format_f64(share)
            );
        }
    }
    write_grid(&run.output, &u)?;
    write_extras(cfg, &u)?;
    Ok(())
}

fn cmd_hybrid(common: &Common) -> Result<()> {
    let run = load(common, "hybrid.fpgrid")?;
    let model = run.cfg.model.build()?;
    match &run.cfg.domain.bounds {
        DomainBox::Local { extent, center } => {
            let local = run_3d_local(
                &model,
                extent,
                center.as_deref(),
                run.cfg.domain.r,
                run.cfg.domain.pilot_spacing,
                &run.cfg.sampler,
                &run.cfg.solver,
            )?;
            println!("box.center={}", fphybrid::config::format_vec(&local.center));
            let u = postprocess_density(&local.run.density, run.postprocess)?;
            print!("{}", local.run.report.to_key_values());
            write_grid(&run.output, &u)?;
            let marginal = fphybrid::experiments::z_marginal(&u)?;
            write_grid(sidecar(&run.output, ".xy.fpgrid"), &marginal)?;
            if let Some(path) = &run.cfg.output.csv {
                write_csv(path, &u)?;
            }
            if let Some(path) = &run.cfg.output.pgm {
                write_pgm(path, &marginal)?;
            }
            Ok(())
        }
        DomainBox::Fixed { .. } => {
            let spec = run.cfg.domain.fixed_spec()?;
            let result = run_hybrid(
                &model,
                &spec,
                &run.cfg.sampler,
                &run.cfg.solver,
                run.mass_mode,
            )?;
            finish_hybrid(&run, result)
        }
    }
}

fn cmd_error_table(common: &Common, trials: Option<usize>) -> Result<()> {
    let run = load(common, "error_table.csv")?;
    let cfg = &run.cfg;
    if cfg.model.name != "double-well" {
        return Err(FpError::Parameter(
            "error-table needs the analytic reference of the double-well model".into(),
        ));
    }
    let DomainBox::Fixed { lower, upper } = &cfg.domain.bounds else {
        return Err(FpError::Parameter(
            "error-table needs fixed domain corners".into(),
        ));
    };
    let model = cfg.model.build()?;
    let sigma = cfg.model.params.get("sigma").map_or(0.6, |v| v[0]);
    let mass_mode = run.mass_mode;
    let table = error_table(
        &model,
        lower,
        upper,
        &cfg.experiment.t_list,
        &cfg.experiment.h_list,
        trials.unwrap_or(cfg.experiment.trials),
        &cfg.sampler,
        &cfg.solver,
        mass_mode,
        &|spec| double_well_reference(spec, sigma, mass_mode),
    )?;
    let csv = table.to_csv();
    write_atomic(&run.output, csv.as_bytes())?;
    write_atomic(
        sidecar(&run.output, ".mc.csv"),
        table.mc_to_csv().as_bytes(),
    )?;
    print!("{csv}");
    Ok(())
}

fn cmd_glue(common: &Common) -> Result<()> {
    let run = load(common, "glued.fpgrid")?;
    let cfg = &run.cfg;
    let model = cfg.model.build()?;
    let spec = cfg.domain.fixed_spec()?;
    let (glued, runs) = run_glued(
        &model,
        &spec,
        cfg.experiment.glue_parts,
        cfg.experiment.glue_axis,
        &cfg.sampler,
        &cfg.solver,
    )?;
    let stem = run.output.with_extension("");
    for (k, (part, r)) in glued.parts().iter().zip(&runs).enumerate() {
        let path = sidecar(&stem, &format!(".part{k}.fpgrid"));
        write_grid(&path, &postprocess_density(part, run.postprocess)?)?;
        println!("part{k}.path={}", path.display());
        println!(
            "part{k}.mass={}",
            fphybrid::config::format_f64(r.report.mc_mass)
        );
    }
    println!(
        "integral={}",
        fphybrid::config::format_f64(glued.integral())
    );
    Ok(())
}

fn cmd_render(input: &Path, format: RenderFormat, output: Option<&Path>) -> Result<()> {
    let density = read_grid(input)?;
    let ext = match format {
        RenderFormat::Pgm => "pgm",
        RenderFormat::Csv => "csv",
    };
    let out = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.with_extension(ext));
    match format {
        RenderFormat::Pgm => write_pgm(&out, &density),
        RenderFormat::Csv => write_csv(&out, &density),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Sample(c) => cmd_sample(c),
        Command::Assemble { common, mass } => cmd_assemble(common, *mass),
        Command::Solve { common, histogram } => cmd_solve(common, histogram),
        Command::Hybrid(c) => cmd_hybrid(c),
        Command::ErrorTable { common, trials } => cmd_error_table(common, *trials),
        Command::Glue(c) => cmd_glue(c),
        Command::Render {
            input,
            format,
            output,
        } => cmd_render(input, *format, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(exit_code_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!(
                "error class={} code={} message={message:?}",
                e.class(),
                e.exit_code()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
