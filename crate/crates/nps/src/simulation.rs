//! Coupled time integration: Poisson -> Nernst-Planck -> Stokes per step,
//! with diagnostics streaming and optional steady-state reference tracking.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord, DiagnosticsSink};
use crate::elliptic;
use crate::error::{Error, Result};
use crate::grid::{BoundaryData, Grid, Params, ScalarField, VelocityField};
use crate::nernst_planck;
use crate::steady::SteadyState;
use crate::stokes;

/// Discrete fields at one time instant. The stored potential is consistent
/// with the stored charge density to the elliptic tolerance, and the stored
/// pressure is the most recent projection potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub phi: ScalarField,
    pub u: VelocityField,
    pub p: ScalarField,
}

impl State {
    /// Assembles a state at `t = 0` from concentrations and a velocity,
    /// solving the Poisson problem so the stored potential is consistent.
    pub fn assemble(
        c1: ScalarField,
        c2: ScalarField,
        u: VelocityField,
        bd: &BoundaryData,
        params: &Params,
        elliptic_tol: f64,
    ) -> Result<State> {
        let spec = c1.spec();
        let rho = c1.sub(&c2);
        let (phi, _) = elliptic::solve_potential(&rho, bd, params, elliptic_tol)?;
        let grid = Grid::from_spec_unchecked(spec);
        Ok(State { t: 0.0, c1, c2, phi, u, p: ScalarField::zeros(&grid) })
    }

    pub fn rho(&self) -> ScalarField {
        self.c1.sub(&self.c2)
    }

    pub fn min_concentration(&self) -> f64 {
        self.c1.min().min(self.c2.min())
    }
}

/// Solver knobs for a single step.
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    /// Hard cap on the time step.
    pub dt_max: f64,
    /// Absolute tolerance for the potential Poisson solve.
    pub elliptic_tol: f64,
    /// Divergence tolerance for the pressure projection.
    pub projection_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { dt_max: 0.05, elliptic_tol: 1e-10, projection_tol: 1e-10 }
    }
}

/// One coupled forward step. The stored potential already matches the
/// state's charge density, so the ordering per step is: choose dt, advance
/// the ions with the current potential and lagged velocity, assemble the
/// electric force with the same potential, advance the fluid, then refresh
/// the potential from the new charge density.
pub fn step(state: &State, bd: &BoundaryData, params: &Params, opts: &StepOptions) -> Result<State> {
    let spec = state.c1.spec();
    let dt_visc = stokes::viscous_dt_limit(spec, params.nu);
    let dt = nernst_planck::stable_dt_with_boundary(&state.phi, &state.u, bd, params, opts.dt_max)
        .min(dt_visc);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::TimeStepTooLarge { dt, limit: dt_visc });
    }

    let (c1, c2) =
        nernst_planck::np_step(&state.c1, &state.c2, &state.phi, &state.u, bd, params, dt)?;
    let force = stokes::electric_force(&c1, &c2, &state.phi, params);
    let (p, u) = stokes::stokes_step_full(
        &state.u,
        &force,
        params,
        dt,
        opts.projection_tol,
        Some(&state.p),
    )?;
    let rho = c1.sub(&c2);
    let (phi, _) = elliptic::solve_potential_with_guess(
        &rho,
        bd,
        params,
        opts.elliptic_tol,
        Some(&state.phi),
    )?;
    Ok(State { t: state.t + dt, c1, c2, phi, u, p })
}

/// Options for a full run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub step: StepOptions,
    /// Emit a diagnostics record every this many steps.
    pub cadence: usize,
    /// Stop early once the steadiness residual
    /// `(||dc1|| + ||dc2|| + ||du||)/dt` drops below this value.
    pub steady_stop: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { step: StepOptions::default(), cadence: 10, steady_stop: None }
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: State,
    pub history: Vec<DiagnosticsRecord>,
    /// Steadiness residual of the last step taken, if any step was taken.
    pub last_residual: Option<f64>,
    /// True when the run ended through the `steady_stop` criterion.
    pub stopped_steady: bool,
    pub steps: usize,
}

/// A run that aborted mid-way; the partial history and last good state are
/// preserved.
#[derive(Debug)]
pub struct RunAbort {
    pub error: Error,
    pub history: Vec<DiagnosticsRecord>,
    pub last_state: State,
}

impl std::fmt::Display for RunAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at t = {}: {}", self.last_state.t, self.error)
    }
}

impl std::error::Error for RunAbort {}

/// Integrates from `init` until `t_end` (or until steady when requested),
/// recording diagnostics every `cadence` steps and streaming them to `sink`.
/// When `reference` is given each record carries the Lyapunov energy relative
/// to it.
pub fn run(
    init: State,
    bd: &BoundaryData,
    params: &Params,
    t_end: f64,
    reference: Option<&SteadyState>,
    opts: &RunOptions,
    sink: &mut dyn DiagnosticsSink,
) -> std::result::Result<RunResult, Box<RunAbort>> {
    let mut history = Vec::new();
    let mut state = init;
    let mut emit = |state: &State, history: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        let rec = diagnostics::record_from_state(state, reference);
        sink.append(&rec)?;
        history.push(rec);
        Ok(())
    };
    if let Err(error) = emit(&state, &mut history) {
        return Err(Box::new(RunAbort { error, history, last_state: state }));
    }
    let mut steps = 0usize;
    let mut last_residual = None;
    let mut stopped_steady = false;
    while state.t < t_end {
        let next = match step(&state, bd, params, &opts.step) {
            Ok(s) => s,
            Err(error) => {
                return Err(Box::new(RunAbort { error, history, last_state: state }));
            }
        };
        let dt = next.t - state.t;
        let r = (crate::grid::l2_norm(&next.c1.sub(&state.c1))
            + crate::grid::l2_norm(&next.c2.sub(&state.c2))
            + crate::grid::l2_norm_velocity(&next.u.sub(&state.u)))
            / dt;
        last_residual = Some(r);
        state = next;
        steps += 1;
        let steady_hit = opts.steady_stop.map(|tol| r < tol).unwrap_or(false);
        let done = state.t >= t_end || steady_hit;
        if steps % opts.cadence == 0 || done {
            if let Err(error) = emit(&state, &mut history) {
                return Err(Box::new(RunAbort { error, history, last_state: state }));
            }
        }
        if steady_hit {
            stopped_steady = true;
            break;
        }
    }
    Ok(RunResult { state, history, last_residual, stopped_steady, steps })
}
