//! Configuration, CLI commands, and experiment drivers.
//!
//! A scenario file is TOML; boundary traces are closed-form expressions in
//! the per-side arclength `s` (measured counterclockwise from each side's
//! starting corner). Commands: `run`, `steady`, `pb`, `classify`, `sweep`.

pub mod expr;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, BoundaryClassification, CsvSink, NullSink};
use crate::error::{Error, Result};
use crate::grid::{
    BoundaryData, BoundaryMode, Grid, GridSpec, Params, ScalarField, Side, VelocityField,
    build_grid, l2_norm, l2_norm_velocity, linf_norm,
};
use crate::io;
use crate::simulation::{self, RunOptions, State, StepOptions};
use crate::steady::{self, EquilibriumSpec, SteadyState};
use expr::Expr;

// ---------------------------------------------------------------------------
// raw config (serde view of the TOML document)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    params: Option<RawParams>,
    boundary: Option<RawBoundary>,
    equilibrium: Option<RawEquilibrium>,
    initial: Option<RawInitial>,
    solver: Option<RawSolver>,
    output: Option<RawOutput>,
    run: Option<RawRun>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<usize>,
    ny: Option<usize>,
    lx: Option<f64>,
    ly: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    d1: Option<f64>,
    d2: Option<f64>,
    eps: Option<f64>,
    nu: Option<f64>,
    kc: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    gamma1: Option<String>,
    gamma2: Option<String>,
    w: Option<String>,
    mode: Option<String>,
    bottom: Option<RawSide>,
    right: Option<RawSide>,
    top: Option<RawSide>,
    left: Option<RawSide>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSide {
    gamma1: Option<String>,
    gamma2: Option<String>,
    w: Option<String>,
    mode: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquilibrium {
    mu1: f64,
    mu2: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    level: Option<f64>,
    amplitude: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    elliptic_tol: Option<f64>,
    steady_tol: Option<f64>,
    dt_max: Option<f64>,
    t_end: Option<f64>,
    t_cap: Option<f64>,
    cadence: Option<usize>,
    equilibrium_tol: Option<f64>,
    criterion_noise: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    reference: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    amplitudes: Option<Vec<f64>>,
    mean_levels: Option<Vec<f64>>,
    bisect_iters: Option<usize>,
    agreement_factor: Option<f64>,
    t_cap: Option<f64>,
}

// ---------------------------------------------------------------------------
// resolved config
// ---------------------------------------------------------------------------

/// Boundary expressions for one side.
#[derive(Debug, Clone)]
pub struct SideExprs {
    pub gamma1: Expr,
    pub gamma2: Expr,
    pub w: Expr,
    pub mode: BoundaryMode,
}

/// Reference state tracked during `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    None,
    PoissonBoltzmann,
    Steady,
}

/// Initial-condition recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// Laplace extension of the boundary traces (default).
    Extension,
    /// Constant fields at `level`.
    Constant,
    /// `level + amplitude * uniform(-1, 1)` per cell, clipped positive.
    Random,
}

#[derive(Debug, Clone)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub level: f64,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub elliptic_tol: f64,
    pub steady_tol: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub t_cap: f64,
    pub cadence: usize,
    /// Electrochemical-potential span accepted as equilibrium.
    pub equilibrium_tol: f64,
    /// Optional override of the criterion quadrature-noise threshold.
    pub criterion_noise: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
    pub mean_levels: Vec<f64>,
    pub bisect_iters: usize,
    pub agreement_factor: f64,
    pub t_cap: f64,
}

/// Fully resolved scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub params: Params,
    pub sides: BTreeMap<&'static str, SideExprs>,
    pub equilibrium: Option<(f64, f64)>,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub reference: ReferenceKind,
    pub sweep: SweepConfig,
}

fn side_key(side: Side) -> &'static str {
    side.name()
}

impl ScenarioConfig {
    pub fn side_exprs(&self, side: Side) -> &SideExprs {
        &self.sides[side_key(side)]
    }

    /// Samples the boundary expressions onto a grid at the per-side face
    /// arclengths and validates the result.
    pub fn boundary_data(&self, grid: &Grid) -> Result<BoundaryData> {
        let sample_side = |side: Side| -> crate::grid::SideData {
            let ex = self.side_exprs(side);
            let ss = grid.side_arclengths(side);
            crate::grid::SideData {
                gamma1: ss.iter().map(|&s| ex.gamma1.eval(s)).collect(),
                gamma2: ss.iter().map(|&s| ex.gamma2.eval(s)).collect(),
                w: ss.iter().map(|&s| ex.w.eval(s)).collect(),
                mode: ex.mode,
            }
        };
        let bd = BoundaryData {
            spec: grid.spec(),
            bottom: sample_side(Side::Bottom),
            right: sample_side(Side::Right),
            top: sample_side(Side::Top),
            left: sample_side(Side::Left),
        };
        match bd.validate() {
            Ok(()) => Ok(bd),
            Err(Error::InvalidBoundary(v)) => Err(Error::ConfigValidation(v)),
            Err(e) => Err(e),
        }
    }

    /// Initial state per the configured recipe, seeded by `seed`.
    pub fn initial_state(
        &self,
        grid: &Grid,
        bd: &BoundaryData,
        seed: u64,
    ) -> Result<State> {
        match self.initial.kind {
            InitialKind::Extension => {
                steady::default_initial_state(bd, &self.params, self.solver.elliptic_tol)
            }
            InitialKind::Constant => {
                let c = ScalarField::constant(grid, self.initial.level);
                State::assemble(
                    c.clone(),
                    c,
                    VelocityField::zeros(grid),
                    bd,
                    &self.params,
                    self.solver.elliptic_tol,
                )
            }
            InitialKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (level, amp) = (self.initial.level, self.initial.amplitude);
                let floor = 0.05 * level;
                let mut sample_field = || {
                    let mut f = ScalarField::zeros(grid);
                    for v in f.values_mut() {
                        *v = (level + amp * rng.gen_range(-1.0..1.0)).max(floor);
                    }
                    f
                };
                let c1 = sample_field();
                let c2 = sample_field();
                State::assemble(
                    c1,
                    c2,
                    VelocityField::zeros(grid),
                    bd,
                    &self.params,
                    self.solver.elliptic_tol,
                )
            }
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            step: StepOptions {
                dt_max: self.solver.dt_max,
                elliptic_tol: self.solver.elliptic_tol,
                projection_tol: self.solver.elliptic_tol,
            },
            cadence: self.solver.cadence,
            steady_stop: None,
        }
    }
}

/// Parses and validates a scenario document, reporting every violation.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let mut violations: Vec<String> = Vec::new();

    let g = raw.grid.unwrap_or_default();
    let grid = GridSpec::new(
        g.nx.unwrap_or(64),
        g.ny.unwrap_or(64),
        g.lx.unwrap_or(1.0),
        g.ly.unwrap_or(1.0),
    );
    if let Err(e) = grid.validate() {
        violations.push(e.to_string());
    }

    let p = raw.params.unwrap_or_default();
    let params = Params {
        d1: p.d1.unwrap_or(1.0),
        d2: p.d2.unwrap_or(1.0),
        eps: p.eps.unwrap_or(1.0),
        nu: p.nu.unwrap_or(1.0),
        kc: p.kc.unwrap_or(1.0),
    };
    if let Err(e) = params.validate() {
        violations.push(e.to_string());
    }

    let b = raw.boundary.unwrap_or_default();
    let parse_mode = |field: &str, text: Option<&String>, violations: &mut Vec<String>| -> BoundaryMode {
        match text.map(|s| s.as_str()) {
            None => BoundaryMode::Dirichlet,
            Some("dirichlet") => BoundaryMode::Dirichlet,
            Some("blocking") => BoundaryMode::Blocking,
            Some(other) => {
                violations.push(format!(
                    "{field}: unknown mode '{other}' (expected 'dirichlet' or 'blocking')"
                ));
                BoundaryMode::Dirichlet
            }
        }
    };
    let parse_expr = |field: String, text: &str, violations: &mut Vec<String>| -> Expr {
        match expr::parse(text) {
            Ok(e) => e,
            Err(e) => {
                violations.push(format!("{field}: {e}"));
                Expr::Num(f64::NAN)
            }
        }
    };
    let default_g1 = b.gamma1.clone().unwrap_or_else(|| "1".into());
    let default_g2 = b.gamma2.clone().unwrap_or_else(|| "1".into());
    let default_w = b.w.clone().unwrap_or_else(|| "0".into());
    let default_mode = b.mode.clone();
    let mut sides = BTreeMap::new();
    for side in Side::ALL {
        let raw_side = match side {
            Side::Bottom => &b.bottom,
            Side::Right => &b.right,
            Side::Top => &b.top,
            Side::Left => &b.left,
        };
        let empty = RawSide::default();
        let rs = raw_side.as_ref().unwrap_or(&empty);
        let name = side.name();
        let g1_text = rs.gamma1.clone().unwrap_or_else(|| default_g1.clone());
        let g2_text = rs.gamma2.clone().unwrap_or_else(|| default_g2.clone());
        let w_text = rs.w.clone().unwrap_or_else(|| default_w.clone());
        let mode_text = rs.mode.clone().or_else(|| default_mode.clone());
        sides.insert(
            side_key(side),
            SideExprs {
                gamma1: parse_expr(format!("boundary.{name}.gamma1"), &g1_text, &mut violations),
                gamma2: parse_expr(format!("boundary.{name}.gamma2"), &g2_text, &mut violations),
                w: parse_expr(format!("boundary.{name}.w"), &w_text, &mut violations),
                mode: parse_mode(
                    &format!("boundary.{name}.mode"),
                    mode_text.as_ref(),
                    &mut violations,
                ),
            },
        );
    }

    let i = raw.initial.unwrap_or_default();
    let kind = match i.kind.as_deref() {
        None | Some("extension") => InitialKind::Extension,
        Some("constant") => InitialKind::Constant,
        Some("random") => InitialKind::Random,
        Some(other) => {
            violations.push(format!(
                "initial.kind: unknown kind '{other}' (expected extension/constant/random)"
            ));
            InitialKind::Extension
        }
    };
    let initial = InitialConfig {
        kind,
        level: i.level.unwrap_or(1.0),
        amplitude: i.amplitude.unwrap_or(0.4),
        seed: i.seed.unwrap_or(0),
    };
    if initial.level <= 0.0 {
        violations.push(format!("initial.level: must be positive, got {}", initial.level));
    }

    let s = raw.solver.unwrap_or_default();
    let solver = SolverConfig {
        elliptic_tol: s.elliptic_tol.unwrap_or(1e-10),
        steady_tol: s.steady_tol.unwrap_or(1e-8),
        dt_max: s.dt_max.unwrap_or(0.05),
        t_end: s.t_end.unwrap_or(1.0),
        t_cap: s.t_cap.unwrap_or(50.0),
        cadence: s.cadence.unwrap_or(10).max(1),
        equilibrium_tol: s.equilibrium_tol.unwrap_or(1e-9),
        criterion_noise: s.criterion_noise,
    };
    for (name, v) in [
        ("solver.elliptic_tol", solver.elliptic_tol),
        ("solver.steady_tol", solver.steady_tol),
        ("solver.dt_max", solver.dt_max),
        ("solver.t_cap", solver.t_cap),
    ] {
        if !(v > 0.0) {
            violations.push(format!("{name}: must be positive, got {v}"));
        }
    }

    let o = raw.output.unwrap_or_default();
    let output_dir = PathBuf::from(o.dir.unwrap_or_else(|| "out".into()));
    let mut snapshots = o.snapshots.unwrap_or_default();
    snapshots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let r = raw.run.unwrap_or_default();
    let reference = match r.reference.as_deref() {
        None | Some("none") => ReferenceKind::None,
        Some("pb") => ReferenceKind::PoissonBoltzmann,
        Some("steady") => ReferenceKind::Steady,
        Some(other) => {
            violations.push(format!(
                "run.reference: unknown reference '{other}' (expected none/pb/steady)"
            ));
            ReferenceKind::None
        }
    };

    let sw = raw.sweep.unwrap_or_default();
    let sweep = SweepConfig {
        amplitudes: sw.amplitudes.unwrap_or_else(|| vec![0.01, 0.1, 1.0]),
        mean_levels: sw.mean_levels.unwrap_or_else(|| vec![1.0]),
        bisect_iters: sw.bisect_iters.unwrap_or(0),
        agreement_factor: sw.agreement_factor.unwrap_or(10.0),
        t_cap: sw.t_cap.unwrap_or(solver.t_cap),
    };
    for a in &sweep.amplitudes {
        if !(*a > 0.0) {
            violations.push(format!("sweep.amplitudes: must be positive, got {a}"));
        }
    }

    let equilibrium = raw.equilibrium.map(|e| (e.mu1, e.mu2));

    let config = ScenarioConfig {
        grid,
        params,
        sides,
        equilibrium,
        initial,
        solver,
        output_dir,
        snapshots,
        reference,
        sweep,
    };

    // eager boundary validation on the configured grid
    if violations.is_empty() {
        if let Ok(g) = build_grid(config.grid) {
            if let Err(e) = config.boundary_data(&g) {
                match e {
                    Error::ConfigValidation(v) => violations.extend(v),
                    other => violations.push(other.to_string()),
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::ConfigValidation(violations))
    }
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "nps", about = "Nernst-Planck-Stokes simulator on a rectangle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Square-resolution override (sets nx = ny = N).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Steady-tolerance override.
    #[arg(long)]
    pub tol: Option<f64>,
    /// End-time override for `run`.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Seed override for randomized initial data.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the time-dependent system and stream diagnostics.
    Run(CommonArgs),
    /// Solve for the steady state by pseudo-time continuation.
    Steady(CommonArgs),
    /// Solve the equilibrium (Poisson-Boltzmann) problem by Newton iteration.
    Pb(CommonArgs),
    /// Classify the boundary data (equilibrium / criterion integrals).
    Classify(CommonArgs),
    /// Amplitude sweep with the two-initialization convergence test.
    Sweep(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = parse_config(&text)?;
    if let Some(n) = args.resolution {
        config.grid.nx = n;
        config.grid.ny = n;
        config.grid.validate()?;
    }
    if let Some(t) = args.tol {
        config.solver.steady_tol = t;
    }
    if let Some(t) = args.t_end {
        config.solver.t_end = t;
    }
    if let Some(s) = args.seed {
        config.initial.seed = s;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, &text)?;
    Ok(text)
}

fn classification_of(config: &ScenarioConfig, bd: &BoundaryData) -> Result<BoundaryClassification> {
    diagnostics::classify_boundary_with_threshold(
        bd,
        config.solver.equilibrium_tol,
        config.solver.criterion_noise,
    )
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct RunSummary {
    command: &'static str,
    t_final: f64,
    steps: usize,
    records: usize,
    last_residual: Option<f64>,
    l2_u: f64,
    linf_c1: f64,
    linf_c2: f64,
    min_c: f64,
    mass_c1: f64,
    mass_c2: f64,
    diagnostics_csv: String,
    checkpoint: String,
}

pub fn cmd_run(config: &ScenarioConfig) -> Result<RunSummary> {
    let grid = build_grid(config.grid)?;
    let bd = config.boundary_data(&grid)?;
    std::fs::create_dir_all(&config.output_dir)?;

    let reference: Option<SteadyState> = match config.reference {
        ReferenceKind::None => None,
        ReferenceKind::PoissonBoltzmann => {
            let (mu1, mu2) = config.equilibrium.ok_or_else(|| {
                Error::ConfigValidation(vec![
                    "run.reference = \"pb\" needs an [equilibrium] section".into(),
                ])
            })?;
            Some(steady::solve_poisson_boltzmann(
                &EquilibriumSpec { mu1, mu2, w: bd.clone() },
                &config.params,
                config.solver.steady_tol.min(1e-9),
            )?)
        }
        ReferenceKind::Steady => Some(steady::solve_steady_nps(
            &bd,
            &config.params,
            None,
            config.solver.steady_tol,
            config.solver.t_cap,
        )?),
    };

    let mut state = config.initial_state(&grid, &bd, config.initial.seed)?;
    let csv_path = config.output_dir.join("diagnostics.csv");
    let mut sink = CsvSink::new(BufWriter::new(File::create(&csv_path)?));
    let opts = config.run_options();

    let mut steps = 0usize;
    let mut records = 0usize;
    let mut last_residual = None;
    let mut stops: Vec<f64> = config
        .snapshots
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t < config.solver.t_end)
        .collect();
    stops.push(config.solver.t_end);
    for (k, t_stop) in stops.iter().enumerate() {
        let out = simulation::run(
            state,
            &bd,
            &config.params,
            *t_stop,
            reference.as_ref(),
            &opts,
            &mut sink,
        )
        .map_err(|abort| abort.error)?;
        state = out.state;
        steps += out.steps;
        records += out.history.len();
        last_residual = out.last_residual.or(last_residual);
        if k + 1 < stops.len() {
            io::write_state_snapshot(&config.output_dir, &format!("snapshot_{k}"), &state)?;
        }
    }
    io::write_state_snapshot(&config.output_dir, "final", &state)?;
    let checkpoint = config.output_dir.join("state.json");
    io::save_checkpoint(&checkpoint, &state)?;

    let rec = diagnostics::record_from_state(&state, reference.as_ref());
    let summary = RunSummary {
        command: "run",
        t_final: state.t,
        steps,
        records,
        last_residual,
        l2_u: rec.l2_u,
        linf_c1: rec.linf_c1,
        linf_c2: rec.linf_c2,
        min_c: rec.min_c,
        mass_c1: rec.mass_c1,
        mass_c2: rec.mass_c2,
        diagnostics_csv: csv_path.display().to_string(),
        checkpoint: checkpoint.display().to_string(),
    };
    let text = write_json(&config.output_dir.join("summary_run.json"), &summary)?;
    println!("{text}");
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SteadySummary {
    command: &'static str,
    method: crate::steady::SteadyMethod,
    residual: f64,
    steady_operator_residual: f64,
    linf_c1: f64,
    linf_c2: f64,
    l2_u: f64,
    linf_u: f64,
    classification: BoundaryClassification,
}

fn write_steady_outputs(
    config: &ScenarioConfig,
    bd: &BoundaryData,
    s: &SteadyState,
    stem: &str,
) -> Result<SteadySummary> {
    std::fs::create_dir_all(&config.output_dir)?;
    io::write_vtk(
        &config.output_dir.join(format!("{stem}.vtk")),
        stem,
        &[("c1", &s.c1), ("c2", &s.c2), ("phi", &s.phi), ("p", &s.p)],
        Some(&s.u),
    )?;
    for (name, f) in [("c1", &s.c1), ("c2", &s.c2), ("phi", &s.phi), ("p", &s.p)] {
        io::write_csv_field(&config.output_dir.join(format!("{stem}_{name}.csv")), f)?;
    }
    let summary = SteadySummary {
        command: if s.method == crate::steady::SteadyMethod::PoissonBoltzmann {
            "pb"
        } else {
            "steady"
        },
        method: s.method,
        residual: s.residual,
        steady_operator_residual: steady::steady_residual(s, bd, &config.params),
        linf_c1: linf_norm(&s.c1),
        linf_c2: linf_norm(&s.c2),
        l2_u: l2_norm_velocity(&s.u),
        linf_u: s.u.linf(),
        classification: classification_of(config, bd)?,
    };
    let text = write_json(&config.output_dir.join(format!("summary_{stem}.json")), &summary)?;
    println!("{text}");
    Ok(summary)
}

pub fn cmd_steady(config: &ScenarioConfig) -> Result<SteadySummary> {
    let grid = build_grid(config.grid)?;
    let bd = config.boundary_data(&grid)?;
    let init = match config.initial.kind {
        InitialKind::Extension => None,
        _ => Some(config.initial_state(&grid, &bd, config.initial.seed)?),
    };
    let s = steady::solve_steady_nps(
        &bd,
        &config.params,
        init,
        config.solver.steady_tol,
        config.solver.t_cap,
    )?;
    write_steady_outputs(config, &bd, &s, "steady")
}

pub fn cmd_pb(config: &ScenarioConfig) -> Result<SteadySummary> {
    let grid = build_grid(config.grid)?;
    let bd = config.boundary_data(&grid)?;
    let (mu1, mu2) = config.equilibrium.ok_or_else(|| {
        Error::ConfigValidation(vec!["pb needs an [equilibrium] section with mu1, mu2".into()])
    })?;
    let spec = EquilibriumSpec { mu1, mu2, w: bd };
    let s = steady::solve_poisson_boltzmann(&spec, &config.params, config.solver.steady_tol)?;
    let bd_eq = spec.boundary_data()?;
    write_steady_outputs(config, &bd_eq, &s, "pb")
}

#[derive(Debug, Serialize)]
pub struct ClassifySummary {
    command: &'static str,
    classification: BoundaryClassification,
}

pub fn cmd_classify(config: &ScenarioConfig) -> Result<ClassifySummary> {
    let grid = build_grid(config.grid)?;
    let bd = config.boundary_data(&grid)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let summary =
        ClassifySummary { command: "classify", classification: classification_of(config, &bd)? };
    let text = write_json(&config.output_dir.join("summary_classify.json"), &summary)?;
    println!("{text}");
    Ok(summary)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One probed amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mean_level: f64,
    pub amplitude: f64,
    pub smallness: f64,
    pub criterion_1: f64,
    pub converged: bool,
    /// Fitted decay rate of the Lyapunov energy (0 when not available).
    pub rate: f64,
    pub r_squared: f64,
    pub u_star_linf: f64,
    pub energy_monotone: bool,
    pub note: String,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    command: &'static str,
    rows: Vec<SweepRow>,
    /// Largest amplitude passing the two-initialization test, per mean level.
    thresholds: Vec<(f64, Option<f64>)>,
    any_converged: bool,
}

/// Rescales boundary data: deviations of the gammas from their loop means are
/// multiplied by `amplitude` around a new `mean_level`, and the potential
/// trace is multiplied by `amplitude`.
pub fn scale_boundary_data(
    base: &BoundaryData,
    amplitude: f64,
    mean_level: f64,
) -> BoundaryData {
    let loop_mean = |pick: fn(&crate::grid::SideData) -> &Vec<f64>| -> f64 {
        let mut acc = 0.0;
        let mut len = 0.0;
        let spec = base.spec;
        for side in Side::ALL {
            let ds = match side {
                Side::Bottom | Side::Top => spec.hx(),
                Side::Left | Side::Right => spec.hy(),
            };
            for v in pick(base.side(side)) {
                acc += v * ds;
                len += ds;
            }
        }
        acc / len
    };
    let m1 = loop_mean(|d| &d.gamma1);
    let m2 = loop_mean(|d| &d.gamma2);
    let mut out = base.clone();
    for side in Side::ALL {
        let d = out.side_mut(side);
        for v in &mut d.gamma1 {
            *v = mean_level + amplitude * (*v - m1);
        }
        for v in &mut d.gamma2 {
            *v = mean_level + amplitude * (*v - m2);
        }
        for v in &mut d.w {
            *v *= amplitude;
        }
    }
    out
}

struct ProbeOutcome {
    converged: bool,
    rate: f64,
    r_squared: f64,
    u_star_linf: f64,
    energy_monotone: bool,
    note: String,
}

fn probe_amplitude(
    config: &ScenarioConfig,
    grid: &Grid,
    bd: &BoundaryData,
    seed_base: u64,
) -> ProbeOutcome {
    let tol = config.solver.steady_tol;
    let t_cap = config.sweep.t_cap;
    let params = &config.params;
    let fail = |note: String| ProbeOutcome {
        converged: false,
        rate: 0.0,
        r_squared: 0.0,
        u_star_linf: 0.0,
        energy_monotone: false,
        note,
    };
    if let Err(e) = bd.validate() {
        return fail(format!("invalid scaled data: {e}"));
    }
    let reference = match steady::solve_steady_nps(bd, params, None, tol, t_cap) {
        Ok(s) => s,
        Err(e) => return fail(format!("reference solve: {e}")),
    };
    let mean = |pick: fn(&crate::grid::SideData) -> &Vec<f64>| -> f64 {
        let all: Vec<f64> =
            Side::ALL.iter().flat_map(|&s| pick(bd.side(s)).clone()).collect();
        all.iter().sum::<f64>() / all.len() as f64
    };
    let level = 0.5 * (mean(|d| &d.gamma1) + mean(|d| &d.gamma2));
    let randomized = |seed: u64| -> Result<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample_field = || {
            let mut f = ScalarField::zeros(grid);
            for v in f.values_mut() {
                *v = (level * (1.0 + 0.4 * rng.gen_range(-1.0..1.0))).max(0.05 * level);
            }
            f
        };
        let c1 = sample_field();
        let c2 = sample_field();
        State::assemble(
            c1,
            c2,
            VelocityField::zeros(grid),
            bd,
            params,
            config.solver.elliptic_tol,
        )
    };
    let opts = RunOptions {
        step: StepOptions {
            dt_max: config.solver.dt_max,
            elliptic_tol: config.solver.elliptic_tol,
            projection_tol: config.solver.elliptic_tol,
        },
        cadence: config.solver.cadence,
        steady_stop: Some(tol),
    };
    let run_one = |seed: u64| {
        let init = randomized(seed)?;
        simulation::run(init, bd, params, t_cap, Some(&reference), &opts, &mut NullSink)
            .map_err(|abort| abort.error)
    };
    let a = match run_one(seed_base.wrapping_mul(2).wrapping_add(1)) {
        Ok(r) => r,
        Err(e) => return fail(format!("seeded run 1: {e}")),
    };
    let b = match run_one(seed_base.wrapping_mul(2).wrapping_add(2)) {
        Ok(r) => r,
        Err(e) => return fail(format!("seeded run 2: {e}")),
    };
    let agree_tol = config.sweep.agreement_factor * tol;
    let agree = l2_norm(&a.state.c1.sub(&b.state.c1)) <= agree_tol
        && l2_norm(&a.state.c2.sub(&b.state.c2)) <= agree_tol
        && l2_norm_velocity(&a.state.u.sub(&b.state.u)) <= agree_tol;
    let converged = a.stopped_steady && b.stopped_steady && agree;
    let series: Vec<(f64, f64)> =
        a.history.iter().map(|r| (r.t, r.e_energy)).filter(|(_, e)| e.is_finite()).collect();
    let (rate, r_squared, t_onset) = match diagnostics::fit_decay_rate(&series) {
        Ok(fit) if fit.decaying => (fit.rate, fit.r_squared, fit.t_onset),
        Ok(fit) => (fit.rate, fit.r_squared, fit.t_onset),
        Err(_) => (0.0, 0.0, 0.0),
    };
    let mut energy_monotone = true;
    let mut prev = f64::INFINITY;
    for (t, e) in &series {
        if *t >= t_onset {
            if *e > prev + 1e-10 {
                energy_monotone = false;
                break;
            }
            prev = *e;
        }
    }
    let note = if converged {
        String::new()
    } else if !(a.stopped_steady && b.stopped_steady) {
        "t_cap reached before steadiness".into()
    } else {
        "seeded runs disagree".into()
    };
    ProbeOutcome {
        converged,
        rate,
        r_squared,
        u_star_linf: reference.u.linf(),
        energy_monotone,
        note,
    }
}

pub fn cmd_sweep(config: &ScenarioConfig) -> Result<SweepSummary> {
    let grid = build_grid(config.grid)?;
    let base = config.boundary_data(&grid)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let seed_base = config.initial.seed;

    let probe = |mean_level: f64, amplitude: f64| -> SweepRow {
        let bd = scale_boundary_data(&base, amplitude, mean_level);
        let (smallness, criterion_1) = match classification_of(config, &bd) {
            Ok(c) => (c.smallness, c.criterion_1),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let outcome = probe_amplitude(config, &grid, &bd, seed_base);
        SweepRow {
            mean_level,
            amplitude,
            smallness,
            criterion_1,
            converged: outcome.converged,
            rate: outcome.rate,
            r_squared: outcome.r_squared,
            u_star_linf: outcome.u_star_linf,
            energy_monotone: outcome.energy_monotone,
            note: outcome.note,
        }
    };

    // ladder, in parallel
    let jobs: Vec<(f64, f64)> = config
        .sweep
        .mean_levels
        .iter()
        .flat_map(|&m| config.sweep.amplitudes.iter().map(move |&a| (m, a)))
        .collect();
    let mut rows: Vec<SweepRow> = jobs.par_iter().map(|&(m, a)| probe(m, a)).collect();

    // bisection refinement per mean level between the largest passing and the
    // smallest failing amplitude
    let mut thresholds = Vec::new();
    for &m in &config.sweep.mean_levels {
        let mut lo: Option<f64> = None;
        let mut hi: Option<f64> = None;
        let mut level_rows: Vec<&SweepRow> =
            rows.iter().filter(|r| r.mean_level == m).collect();
        level_rows.sort_by(|a, b| a.amplitude.partial_cmp(&b.amplitude).unwrap());
        for r in &level_rows {
            if r.converged {
                lo = Some(r.amplitude);
            } else if lo.is_some() && hi.is_none() {
                hi = Some(r.amplitude);
            }
        }
        if let (Some(mut alo), Some(mut ahi)) = (lo, hi) {
            for _ in 0..config.sweep.bisect_iters {
                let mid = (alo * ahi).sqrt();
                let row = probe(m, mid);
                let passed = row.converged;
                rows.push(row);
                if passed {
                    alo = mid;
                } else {
                    ahi = mid;
                }
            }
            lo = Some(alo);
        }
        thresholds.push((m, lo));
    }

    rows.sort_by(|a, b| {
        (a.mean_level, a.amplitude)
            .partial_cmp(&(b.mean_level, b.amplitude))
            .unwrap()
    });

    // CSV table
    let table = config.output_dir.join("sweep.csv");
    {
        use std::io::Write;
        let mut out = BufWriter::new(File::create(&table)?);
        writeln!(
            out,
            "mean_level,amplitude,smallness,criterion_1,converged,rate,r_squared,u_star_linf,energy_monotone,note"
        )?;
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.mean_level,
                r.amplitude,
                r.smallness,
                r.criterion_1,
                r.converged,
                r.rate,
                r.r_squared,
                r.u_star_linf,
                r.energy_monotone,
                r.note
            )?;
        }
    }

    let any_converged = rows.iter().any(|r| r.converged);
    let summary = SweepSummary { command: "sweep", rows, thresholds, any_converged };
    let text = write_json(&config.output_dir.join("summary_sweep.json"), &summary)?;
    println!("{text}");
    Ok(summary)
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::ConfigParse(_)
        | Error::ConfigValidation(_)
        | Error::InvalidGrid(_)
        | Error::InvalidBoundary(_)
        | Error::TraceMismatch { .. }
        | Error::InsufficientData(_) => 2,
        Error::NonConvergence { .. }
        | Error::SteadyNonConvergence { .. }
        | Error::TimeStepTooLarge { .. } => 3,
        Error::Io(_) => 1,
    }
}

/// Runs the CLI and returns the process exit code
/// (0 ok, 2 validation, 3 non-convergence, 4 sweep found no passing amplitude).
pub fn cli_main() -> i32 {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Run(a) | Command::Steady(a) | Command::Pb(a) | Command::Classify(a)
        | Command::Sweep(a) => a,
    };
    let config = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let outcome: Result<i32> = match &cli.command {
        Command::Run(_) => cmd_run(&config).map(|_| 0),
        Command::Steady(_) => cmd_steady(&config).map(|_| 0),
        Command::Pb(_) => cmd_pb(&config).map(|_| 0),
        Command::Classify(_) => cmd_classify(&config).map(|_| 0),
        Command::Sweep(_) => cmd_sweep(&config).map(|s| if s.any_converged { 0 } else { 4 }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.grid.nx, 64);
        assert_eq!(c.grid.ny, 64);
        assert_eq!(c.params.d1, 1.0);
        assert_eq!(c.solver.cadence, 10);
        assert_eq!(c.initial.kind, InitialKind::Extension);
        assert_eq!(c.reference, ReferenceKind::None);
        let g = build_grid(c.grid).unwrap();
        let bd = c.boundary_data(&g).unwrap();
        assert!(bd.all_dirichlet());
        assert_eq!(bd.bottom.gamma1[0], 1.0);
        assert_eq!(bd.top.w[5], 0.0);
    }

    #[test]
    fn negative_gamma_rejected_with_position() {
        let err = parse_config("[boundary]\ngamma1 = \"-1\"\n");
        match err {
            Err(Error::ConfigValidation(v)) => {
                assert!(
                    v.iter().any(|m| m.contains("strictly positive")),
                    "violations: {v:?}"
                );
                // every side reports its own violation
                assert!(v.iter().any(|m| m.contains("bottom")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn boundary_expression_sampling_matches_closed_form() {
        let text = r#"
[grid]
nx = 32
ny = 32

[boundary.bottom]
w = "0.1*sin(2*pi*s)"
"#;
        let c = parse_config(text).unwrap();
        let g = build_grid(c.grid).unwrap();
        let bd = c.boundary_data(&g).unwrap();
        for (k, s) in g.side_arclengths(Side::Bottom).iter().enumerate() {
            let want = 0.1 * (2.0 * PI * s).sin();
            assert!((bd.bottom.w[k] - want).abs() < 1e-12);
        }
        // other sides keep the default
        assert!(bd.left.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            parse_config("[grid]\nnnx = 3"),
            Err(Error::ConfigParse(_))
        ));
        assert!(matches!(
            parse_config("[boundary]\nmode = \"slippery\""),
            Err(Error::ConfigValidation(_))
        ));
    }

    #[test]
    fn scaled_boundary_keeps_mean_and_scales_w() {
        let c = parse_config(
            "[grid]\nnx = 16\nny = 16\n[boundary.bottom]\ngamma1 = \"1 + 0.5*sin(2*pi*s)\"\nw = \"0.3*cos(2*pi*s)\"\n",
        )
        .unwrap();
        let g = build_grid(c.grid).unwrap();
        let base = c.boundary_data(&g).unwrap();
        let scaled = scale_boundary_data(&base, 0.5, 2.0);
        // w scales exactly
        for (a, b) in scaled.bottom.w.iter().zip(&base.bottom.w) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        // gamma deviations shrink around the new mean
        let mean: f64 =
            scaled.bottom.gamma1.iter().sum::<f64>() / scaled.bottom.gamma1.len() as f64;
        // bottom mean is not the loop mean, but must sit near the new level
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
        let dev = scaled
            .bottom
            .gamma1
            .iter()
            .fold(0.0_f64, |m, v| m.max((v - 2.0).abs()));
        assert!(dev < 0.3, "deviation {dev} should be about half of 0.5");
    }

    #[test]
    fn equilibrium_dataset_classifies_as_equilibrium() {
        let text = r#"
[grid]
nx = 24
ny = 24

[boundary]
gamma1 = "exp(0-0.2*sin(2*pi*s))"
gamma2 = "exp(0.2*sin(2*pi*s))"
w = "0.2*sin(2*pi*s)"
"#;
        let c = parse_config(text).unwrap();
        let g = build_grid(c.grid).unwrap();
        let bd = c.boundary_data(&g).unwrap();
        let cls = classification_of(&c, &bd).unwrap();
        assert_eq!(cls.label, crate::diagnostics::BoundaryLabel::Equilibrium);
    }
}
