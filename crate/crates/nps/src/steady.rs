//! Steady states: the equilibrium state by Newton iteration on the nonlinear
//! Poisson problem, the general steady state by pseudo-time continuation of
//! the coupled system, and an independent steadiness residual check.

use serde::{Deserialize, Serialize};

use crate::elliptic::{self, PoissonOp, ScalarBc};
use crate::error::{Error, Result};
use crate::grid::{
    BoundaryData, BoundaryMode, Grid, Params, ScalarField, Side, VelocityField, build_grid,
    l2_norm, l2_norm_velocity,
};
use crate::nernst_planck::bernoulli_pair;
use crate::simulation::{self, State, StepOptions};
use crate::stokes;

/// Equilibrium boundary conditions: constant electrochemical potentials plus
/// a potential trace. The implied concentration traces are
/// `gamma1 = exp(mu1 - W)` and `gamma2 = exp(mu2 + W)`.
#[derive(Debug, Clone)]
pub struct EquilibriumSpec {
    pub mu1: f64,
    pub mu2: f64,
    /// Only the `w` component of the traces is used.
    pub w: BoundaryData,
}

impl EquilibriumSpec {
    /// Boundary data with the implied Boltzmann concentration traces.
    pub fn boundary_data(&self) -> Result<BoundaryData> {
        let mut bd = self.w.clone();
        for side in Side::ALL {
            let d = bd.side_mut(side);
            d.mode = BoundaryMode::Dirichlet;
            d.gamma1 = d.w.iter().map(|w| (self.mu1 - w).exp()).collect();
            d.gamma2 = d.w.iter().map(|w| (self.mu2 + w).exp()).collect();
        }
        bd.validate()?;
        Ok(bd)
    }
}

/// How a steady state was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyMethod {
    #[serde(rename = "pb-newton")]
    PoissonBoltzmann,
    #[serde(rename = "pseudo-time")]
    PseudoTime,
}

/// Converged steady fields with the residual they were solved to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub phi: ScalarField,
    pub u: VelocityField,
    pub p: ScalarField,
    pub residual: f64,
    pub method: SteadyMethod,
}

/// Newton solve of the equilibrium problem
/// `-eps lap(phi) = exp(mu1 - phi) - exp(mu2 + phi)` with trace `W`.
/// Each Newton correction solves the symmetric positive definite linearized
/// system by conjugate gradients; a halving line search guards the update.
/// The returned state has `u = 0` and pressure equal to the mean-zero
/// osmotic field `K (c1 + c2)`, which balances the electric force exactly.
pub fn solve_poisson_boltzmann(
    spec: &EquilibriumSpec,
    params: &Params,
    tol: f64,
) -> Result<SteadyState> {
    assert!(tol > 0.0);
    let gspec = spec.w.spec;
    let grid = build_grid(gspec)?;
    let eps = params.eps;
    let n = gspec.n_cells();
    let bc_rhs = elliptic::dirichlet_rhs(gspec, &spec.w);

    // residual of the nonlinear equation, in the equation's own units
    let op_plain = PoissonOp { spec: gspec, bc: ScalarBc::Dirichlet, extra_diag: None };
    let residual = |phi: &[f64], scratch: &mut Vec<f64>| -> Vec<f64> {
        scratch.resize(n, 0.0);
        op_plain.apply(phi, scratch);
        (0..n)
            .map(|c| {
                eps * (scratch[c] - bc_rhs[c]) - (spec.mu1 - phi[c]).exp()
                    + (spec.mu2 + phi[c]).exp()
            })
            .collect()
    };
    let l2 = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() * gspec.cell_area()).sqrt();

    let mut phi = elliptic::harmonic_extension(&spec.w, tol.min(1e-10))?
        .values()
        .to_vec();
    let mut scratch = Vec::new();
    let mut f = residual(&phi, &mut scratch);
    let mut res = l2(&f);
    let cap = 50;
    for _newton in 0..cap {
        if res <= tol {
            let phi = ScalarField::from_vec(gspec, phi);
            return Ok(assemble_equilibrium(&grid, spec, params, phi, res));
        }
        // J = eps*A + diag(c1 + c2); solve (A + diag/eps) delta = -f/eps
        let diag: Vec<f64> = phi
            .iter()
            .map(|p| ((spec.mu1 - p).exp() + (spec.mu2 + p).exp()) / eps)
            .collect();
        let op = PoissonOp { spec: gspec, bc: ScalarBc::Dirichlet, extra_diag: Some(&diag) };
        let b: Vec<f64> = f.iter().map(|v| -v / eps).collect();
        let cg_tol = ((1e-4 * res).max(0.01 * tol)) / eps;
        let (delta, rep) = elliptic::cg_solve(&op, &b, None, cg_tol, elliptic::iteration_cap(gspec));
        if !rep.converged {
            return Err(Error::NonConvergence {
                what: "linearized equilibrium solve".into(),
                iterations: rep.iterations,
                residual: rep.residual_l2,
                tol: cg_tol,
            });
        }
        // halving line search on the residual norm
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 2.0_f64.powi(-30) {
            let trial: Vec<f64> =
                phi.iter().zip(&delta).map(|(p, d)| p + lambda * d).collect();
            let ft = residual(&trial, &mut scratch);
            let rt = l2(&ft);
            if rt < res {
                phi = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= tol {
        let phi = ScalarField::from_vec(gspec, phi);
        return Ok(assemble_equilibrium(&grid, spec, params, phi, res));
    }
    Err(Error::NonConvergence {
        what: "equilibrium Newton iteration".into(),
        iterations: cap,
        residual: res,
        tol,
    })
}

fn assemble_equilibrium(
    grid: &Grid,
    spec: &EquilibriumSpec,
    params: &Params,
    phi: ScalarField,
    residual: f64,
) -> SteadyState {
    let gspec = grid.spec();
    let c1 = ScalarField::from_vec(
        gspec,
        phi.values().iter().map(|p| (spec.mu1 - p).exp()).collect(),
    );
    let c2 = ScalarField::from_vec(
        gspec,
        phi.values().iter().map(|p| (spec.mu2 + p).exp()).collect(),
    );
    let mut p = ScalarField::from_vec(
        gspec,
        c1.values()
            .iter()
            .zip(c2.values())
            .map(|(a, b)| params.kc * (a + b))
            .collect(),
    );
    p.remove_mean();
    SteadyState {
        c1,
        c2,
        phi,
        u: VelocityField::zeros(grid),
        p,
        residual,
        method: SteadyMethod::PoissonBoltzmann,
    }
}

/// Default initial concentrations for the pseudo-time solve: the Laplace
/// extension of each gamma trace, clipped below at half the smallest trace
/// value so the start is strictly positive.
pub fn default_initial_state(bd: &BoundaryData, params: &Params, tol: f64) -> Result<State> {
    let grid = build_grid(bd.spec)?;
    let extend = |pick: fn(&crate::grid::SideData) -> &Vec<f64>| -> Result<ScalarField> {
        let mut bw = bd.clone();
        for side in Side::ALL {
            let vals = pick(bd.side(side)).clone();
            bw.side_mut(side).w = vals;
        }
        elliptic::harmonic_extension(&bw, tol)
    };
    let floor1 = 0.5
        * Side::ALL
            .iter()
            .flat_map(|&s| bd.side(s).gamma1.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
    let floor2 = 0.5
        * Side::ALL
            .iter()
            .flat_map(|&s| bd.side(s).gamma2.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
    let mut c1 = extend(|d| &d.gamma1)?;
    let mut c2 = extend(|d| &d.gamma2)?;
    for v in c1.values_mut() {
        *v = v.max(floor1);
    }
    for v in c2.values_mut() {
        *v = v.max(floor2);
    }
    State::assemble(c1, c2, VelocityField::zeros(&grid), bd, params, tol)
}

/// Pseudo-time continuation of the full coupled system until the steadiness
/// residual `(||dc1|| + ||dc2|| + ||du||)/dt` falls below `tol`, or `t_cap`
/// is exceeded (in which case the best state rides along in the error).
pub fn solve_steady_nps(
    bd: &BoundaryData,
    params: &Params,
    init: Option<State>,
    tol: f64,
    t_cap: f64,
) -> Result<SteadyState> {
    assert!(tol > 0.0 && t_cap > 0.0);
    if !bd.all_dirichlet() {
        return Err(Error::InvalidBoundary(vec![
            "steady solve requires Dirichlet data on all sides".into(),
        ]));
    }
    let opts = StepOptions::default();
    let mut state = match init {
        Some(s) => s,
        None => default_initial_state(bd, params, opts.elliptic_tol)?,
    };
    let mut residual = f64::INFINITY;
    while state.t < t_cap {
        let next = simulation::step(&state, bd, params, &opts)?;
        let dt = next.t - state.t;
        residual = (l2_norm(&next.c1.sub(&state.c1))
            + l2_norm(&next.c2.sub(&state.c2))
            + l2_norm_velocity(&next.u.sub(&state.u)))
            / dt;
        state = next;
        if residual < tol {
            let mut p = state.p.clone();
            p.remove_mean();
            return Ok(SteadyState {
                c1: state.c1,
                c2: state.c2,
                phi: state.phi,
                u: state.u,
                p,
                residual,
                method: SteadyMethod::PseudoTime,
            });
        }
    }
    let mut p = state.p.clone();
    p.remove_mean();
    Err(Error::SteadyNonConvergence {
        residual,
        t_reached: state.t,
        best: Box::new(SteadyState {
            c1: state.c1,
            c2: state.c2,
            phi: state.phi,
            u: state.u,
            p,
            residual,
            method: SteadyMethod::PseudoTime,
        }),
    })
}

/// Direct evaluation of the steady-state operator on a candidate state: one
/// flux assembly per equation, no time stepping, summed discrete L2 residuals
/// of the two ion balances, the Poisson equation, the momentum balance, and
/// the divergence constraint. This assembly is written independently of the
/// time steppers.
pub fn steady_residual(s: &SteadyState, bd: &BoundaryData, params: &Params) -> f64 {
    let spec = s.c1.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());

    // ionic balances: div(u c) - D div(grad c + z c grad phi) per cell
    let ion_residual = |c: &ScalarField, gamma: fn(&crate::grid::SideData) -> &Vec<f64>, d: f64, z: f64| -> f64 {
        let mut acc = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                // transport flux through each of the four faces
                let mut net = 0.0;
                // west
                net -= face_flux(s, bd, c, gamma, d, z, i, j, Face::West);
                net += face_flux(s, bd, c, gamma, d, z, i, j, Face::East);
                net -= face_flux(s, bd, c, gamma, d, z, i, j, Face::South);
                net += face_flux(s, bd, c, gamma, d, z, i, j, Face::North);
                // net outflow per unit area must vanish at steady state
                let r = net;
                acc += r * r;
            }
        }
        (acc * spec.cell_area()).sqrt()
    };

    // Poisson residual
    let mut pois = 0.0;
    {
        let op = PoissonOp { spec, bc: ScalarBc::Dirichlet, extra_diag: None };
        let mut ax = vec![0.0; spec.n_cells()];
        op.apply(s.phi.values(), &mut ax);
        let g = elliptic::dirichlet_rhs(spec, bd);
        for c in 0..spec.n_cells() {
            let r = params.eps * (ax[c] - g[c]) - (s.c1.values()[c] - s.c2.values()[c]);
            pois += r * r;
        }
        pois = (pois * spec.cell_area()).sqrt();
    }

    // momentum residual on interior faces: -nu lap u + grad p - f
    let force = stokes::electric_force(&s.c1, &s.c2, &s.phi, params);
    let mut mom = 0.0;
    {
        let ihx2 = 1.0 / (hx * hx);
        let ihy2 = 1.0 / (hy * hy);
        for j in 0..ny {
            for i in 1..nx {
                let c = s.u.ux(i, j);
                let lapx = (s.u.ux(i - 1, j) - 2.0 * c + s.u.ux(i + 1, j)) * ihx2;
                let south = if j > 0 { s.u.ux(i, j - 1) } else { -c };
                let north = if j + 1 < ny { s.u.ux(i, j + 1) } else { -c };
                let lapy = (south - 2.0 * c + north) * ihy2;
                let gp = (s.p.at(i, j) - s.p.at(i - 1, j)) / hx;
                let r = -params.nu * (lapx + lapy) + gp - force.ux(i, j);
                mom += r * r * spec.cell_area();
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let c = s.u.uy(i, j);
                let west = if i > 0 { s.u.uy(i - 1, j) } else { -c };
                let east = if i + 1 < nx { s.u.uy(i + 1, j) } else { -c };
                let lapx = (west - 2.0 * c + east) * ihx2;
                let lapy = (s.u.uy(i, j - 1) - 2.0 * c + s.u.uy(i, j + 1)) * ihy2;
                let gp = (s.p.at(i, j) - s.p.at(i, j - 1)) / hy;
                let r = -params.nu * (lapx + lapy) + gp - force.uy(i, j);
                mom += r * r * spec.cell_area();
            }
        }
        mom = mom.sqrt();
    }

    let div = l2_norm(&s.u.divergence());
    let np1 = ion_residual(&s.c1, |d| &d.gamma1, params.d1, 1.0);
    let np2 = ion_residual(&s.c2, |d| &d.gamma2, params.d2, -1.0);
    np1 + np2 + pois + mom + div
}

#[derive(Clone, Copy, PartialEq)]
enum Face {
    West,
    East,
    South,
    North,
}

/// Total (advective + electrodiffusive) flux through one face of cell (i, j),
/// per unit face length, oriented along +x or +y.
#[allow(clippy::too_many_arguments)]
fn face_flux(
    s: &SteadyState,
    bd: &BoundaryData,
    c: &ScalarField,
    gamma: fn(&crate::grid::SideData) -> &Vec<f64>,
    d: f64,
    z: f64,
    i: usize,
    j: usize,
    face: Face,
) -> f64 {
    let spec = c.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());
    let sg = |c_l: f64, c_r: f64, dphi: f64, h: f64| -> f64 {
        let (bp, bm) = bernoulli_pair(z * dphi);
        (d / h) * (bp * c_l - bm * c_r)
    };
    let upwind = |v: f64, c_l: f64, c_r: f64| if v >= 0.0 { v * c_l } else { v * c_r };
    let wall = |side: Side, k: usize, inward: bool| -> f64 {
        let data = bd.side(side);
        if data.mode == BoundaryMode::Blocking {
            return 0.0;
        }
        let (h, cell) = match side {
            Side::Bottom | Side::Top => (hy, c.at(i, j)),
            Side::Left | Side::Right => (hx, c.at(i, j)),
        };
        let g = gamma(data)[k];
        let w = data.w[k];
        let phi_c = s.phi.at(i, j);
        if inward {
            // face sample is the left state
            sg(g, cell, phi_c - w, 0.5 * h)
        } else {
            sg(cell, g, w - phi_c, 0.5 * h)
        }
    };
    match face {
        Face::West => {
            if i == 0 {
                (wall(Side::Left, j, true)) / hx
            } else {
                let f = sg(c.at(i - 1, j), c.at(i, j), s.phi.at(i, j) - s.phi.at(i - 1, j), hx)
                    + upwind(s.u.ux(i, j), c.at(i - 1, j), c.at(i, j));
                f / hx
            }
        }
        Face::East => {
            if i == nx - 1 {
                (wall(Side::Right, j, false)) / hx
            } else {
                let f = sg(c.at(i, j), c.at(i + 1, j), s.phi.at(i + 1, j) - s.phi.at(i, j), hx)
                    + upwind(s.u.ux(i + 1, j), c.at(i, j), c.at(i + 1, j));
                f / hx
            }
        }
        Face::South => {
            if j == 0 {
                (wall(Side::Bottom, i, true)) / hy
            } else {
                let f = sg(c.at(i, j - 1), c.at(i, j), s.phi.at(i, j) - s.phi.at(i, j - 1), hy)
                    + upwind(s.u.uy(i, j), c.at(i, j - 1), c.at(i, j));
                f / hy
            }
        }
        Face::North => {
            if j == ny - 1 {
                (wall(Side::Top, i, false)) / hy
            } else {
                let f = sg(c.at(i, j), c.at(i, j + 1), s.phi.at(i, j + 1) - s.phi.at(i, j), hy)
                    + upwind(s.u.uy(i, j + 1), c.at(i, j), c.at(i, j + 1));
                f / hy
            }
        }
    }
}

/// Equilibrium boundary data helper for a pure potential trace: builds the
/// `BoundaryData` whose `w` samples come from the closure, with placeholder
/// unit gamma traces (replaced by [`EquilibriumSpec::boundary_data`]).
pub fn potential_trace(
    grid: &Grid,
    w: impl Fn(Side, f64, f64) -> f64,
) -> Result<BoundaryData> {
    BoundaryData::sample(grid, BoundaryMode::Dirichlet, |_, _, _| 1.0, |_, _, _| 1.0, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, linf_norm};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        build_grid(GridSpec::unit_square(n)).unwrap()
    }

    #[test]
    fn neutral_equilibrium_is_trivial() {
        let g = grid(16);
        let w = potential_trace(&g, |_, _, _| 0.0).unwrap();
        let spec = EquilibriumSpec { mu1: 0.0, mu2: 0.0, w };
        let s = solve_poisson_boltzmann(&spec, &Params::default(), 1e-11).unwrap();
        assert!(linf_norm(&s.phi) < 1e-10);
        assert!((s.c1.max() - 1.0).abs() < 1e-10 && (s.c1.min() - 1.0).abs() < 1e-10);
        assert!((s.c2.max() - 1.0).abs() < 1e-10);
        assert_eq!(l2_norm_velocity(&s.u), 0.0);
        assert_eq!(s.method, SteadyMethod::PoissonBoltzmann);
    }

    #[test]
    fn charge_symmetric_equilibrium() {
        let g = grid(12);
        let w = potential_trace(&g, |_, _, _| 0.0).unwrap();
        let mu = -0.7;
        let spec = EquilibriumSpec { mu1: mu, mu2: mu, w };
        let s = solve_poisson_boltzmann(&spec, &Params::default(), 1e-11).unwrap();
        assert!(linf_norm(&s.phi) < 1e-10);
        let want = mu.exp();
        assert!((s.c1.max() - want).abs() < 1e-10);
        assert!((s.c2.min() - want).abs() < 1e-10);
    }

    #[test]
    fn sinusoidal_trace_respects_maximum_principle() {
        let g = grid(32);
        let amp = 0.25;
        let w = potential_trace(&g, |side, x, _| {
            if side == Side::Bottom { amp * (2.0 * PI * x).sin() } else { 0.0 }
        })
        .unwrap();
        let spec = EquilibriumSpec { mu1: 0.0, mu2: 0.0, w };
        let s = solve_poisson_boltzmann(&spec, &Params::default(), 1e-11).unwrap();
        assert!(
            linf_norm(&s.phi) < amp,
            "screening must keep |phi| below the trace amplitude: {}",
            linf_norm(&s.phi)
        );
        // oracle: damped Picard iteration on the same nonlinear system
        let gspec = g.spec();
        let bd = spec.boundary_data().unwrap();
        let mut phi = ScalarField::zeros(&g);
        for _ in 0..400 {
            let rho = ScalarField::from_vec(
                gspec,
                phi.values().iter().map(|p| (-p).exp() - p.exp()).collect(),
            );
            let (lin, _) =
                elliptic::solve_potential(&rho, &bd, &Params::default(), 1e-11).unwrap();
            phi = ScalarField::from_vec(
                gspec,
                phi.values()
                    .iter()
                    .zip(lin.values())
                    .map(|(old, new)| 0.5 * old + 0.5 * new)
                    .collect(),
            );
        }
        let diff = linf_norm(&s.phi.sub(&phi));
        assert!(diff < 1e-7, "Newton vs damped fixed point: {diff}");
    }

    #[test]
    fn newton_handles_larger_amplitude() {
        let g = grid(16);
        let w = potential_trace(&g, |_, x, y| 1.5 * (x - y)).unwrap();
        let spec = EquilibriumSpec { mu1: 0.3, mu2: -0.2, w };
        let s = solve_poisson_boltzmann(&spec, &Params::default(), 1e-10).unwrap();
        assert!(s.residual <= 1e-10);
        assert!(s.c1.min() > 0.0 && s.c2.min() > 0.0);
    }

    #[test]
    fn constant_data_steady_state() {
        let g = grid(8);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 2.0, 2.0, 1.0).unwrap();
        let params = Params::default();
        let s = solve_steady_nps(&bd, &params, None, 1e-9, 10.0).unwrap();
        assert!((s.c1.max() - 2.0).abs() < 1e-6);
        assert!((s.c1.min() - 2.0).abs() < 1e-6);
        assert!(l2_norm_velocity(&s.u) < 1e-9);
        assert_eq!(s.method, SteadyMethod::PseudoTime);
        // independent checker agrees this is steady
        let r = steady_residual(&s, &bd, &params);
        assert!(r < 1e-6, "residual {r}");
    }

    #[test]
    fn trivial_state_has_tiny_residual() {
        let g = grid(8);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let params = Params::default();
        let s = SteadyState {
            c1: ScalarField::constant(&g, 1.0),
            c2: ScalarField::constant(&g, 1.0),
            phi: ScalarField::zeros(&g),
            u: VelocityField::zeros(&g),
            p: ScalarField::zeros(&g),
            residual: 0.0,
            method: SteadyMethod::PoissonBoltzmann,
        };
        assert!(steady_residual(&s, &bd, &params) < 1e-12);
    }

    #[test]
    fn pb_state_passes_independent_residual() {
        let g = grid(24);
        let w = potential_trace(&g, |side, x, _| {
            if side == Side::Top { 0.2 * (2.0 * PI * x).cos() } else { 0.0 }
        })
        .unwrap();
        let spec = EquilibriumSpec { mu1: 0.0, mu2: 0.0, w };
        let params = Params::default();
        let s = solve_poisson_boltzmann(&spec, &params, 1e-11).unwrap();
        let bd = spec.boundary_data().unwrap();
        let r = steady_residual(&s, &bd, &params);
        assert!(r < 1e-8, "pb residual through independent assembly: {r}");
    }

    #[test]
    fn residual_detects_perturbation() {
        let g = grid(16);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let params = Params::default();
        let mut s = SteadyState {
            c1: ScalarField::constant(&g, 1.0),
            c2: ScalarField::constant(&g, 1.0),
            phi: ScalarField::zeros(&g),
            u: VelocityField::zeros(&g),
            p: ScalarField::zeros(&g),
            residual: 0.0,
            method: SteadyMethod::PoissonBoltzmann,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for v in s.c1.values_mut() {
            *v += 1e-3 * rng.gen_range(-1.0..1.0);
        }
        let r = steady_residual(&s, &bd, &params);
        assert!(r >= 1e-4, "perturbed residual {r}");
    }

    #[test]
    fn equilibrium_cross_validation() {
        // pseudo-time and Newton agree on equilibrium data
        let g = grid(16);
        let amp = 0.15;
        let w = potential_trace(&g, |side, x, _| {
            if side == Side::Bottom { amp * (2.0 * PI * x).sin() } else { 0.0 }
        })
        .unwrap();
        let spec = EquilibriumSpec { mu1: 0.0, mu2: 0.0, w };
        let params = Params::default();
        let pb = solve_poisson_boltzmann(&spec, &params, 1e-11).unwrap();
        let bd = spec.boundary_data().unwrap();
        let tol = 1e-7;
        let pt = solve_steady_nps(&bd, &params, None, tol, 30.0).unwrap();
        let dphi = linf_norm(&pt.phi.sub(&pb.phi));
        assert!(dphi <= 10.0 * tol, "cross-solver potential gap {dphi}");
        assert!(l2_norm_velocity(&pt.u) <= tol, "flow at equilibrium {}", l2_norm_velocity(&pt.u));
    }

    #[test]
    fn two_initializations_converge_to_same_state() {
        use rand::{Rng, SeedableRng};
        let g = grid(12);
        let params = Params::default();
        let bd = BoundaryData::sample(
            &g,
            BoundaryMode::Dirichlet,
            |_, x, _| 1.0 + 0.05 * (2.0 * PI * x).sin(),
            |_, _, _| 1.0,
            |_, x, _| 0.05 * (2.0 * PI * x).cos(),
        )
        .unwrap();
        let tol = 1e-8;
        let randomized = |seed: u64| -> State {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c1 = ScalarField::from_fn(&g, |_, _| 1.0 + rng.gen_range(-0.4..0.4));
            let c2 = ScalarField::from_fn(&g, |_, _| 1.0 + rng.gen_range(-0.4..0.4));
            State::assemble(c1, c2, VelocityField::zeros(&g), &bd, &params, 1e-10).unwrap()
        };
        let a = solve_steady_nps(&bd, &params, Some(randomized(1)), tol, 30.0).unwrap();
        let b = solve_steady_nps(&bd, &params, Some(randomized(2)), tol, 30.0).unwrap();
        assert!(l2_norm(&a.c1.sub(&b.c1)) <= 10.0 * tol);
        assert!(l2_norm(&a.c2.sub(&b.c2)) <= 10.0 * tol);
        assert!(l2_norm_velocity(&a.u.sub(&b.u)) <= 10.0 * tol);
    }

    #[test]
    fn nonconvergence_carries_best_state() {
        let g = grid(8);
        let bd = BoundaryData::sample(
            &g,
            BoundaryMode::Dirichlet,
            |_, x, _| 1.0 + 0.3 * (2.0 * PI * x).sin(),
            |_, _, _| 1.0,
            |_, _, _| 0.0,
        )
        .unwrap();
        // absurdly tight tolerance and tiny time budget
        let err = solve_steady_nps(&bd, &Params::default(), None, 1e-300, 1e-3);
        match err {
            Err(Error::SteadyNonConvergence { best, t_reached, .. }) => {
                assert!(t_reached >= 1e-3);
                assert!(best.c1.is_finite());
            }
            other => panic!("expected SteadyNonConvergence, got {other:?}"),
        }
    }
}
