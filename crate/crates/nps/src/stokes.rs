//! Viscous incompressible flow: explicit diffusion plus pressure projection
//! (Chorin splitting), with no-slip walls enforced through ghost reflection.
//! A periodic variant of the same kernel backs the eigenmode decay tests.

use crate::elliptic::{self, PoissonOp, ScalarBc};
use crate::error::{Error, Result};
use crate::grid::{Grid, Params, ScalarField, VelocityField, l2_norm_velocity};

/// Wall treatment for the velocity update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlowBc {
    NoSlip,
    Periodic,
}

/// Logarithmic mean `(b - a) / ln(b/a)`, continued by its limits on the
/// diagonal and at zero. Second-order accurate as a face average.
#[inline]
pub(crate) fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let zeta = (b - a) / (b + a);
    if zeta.abs() < 1e-4 {
        // L = m * zeta/atanh(zeta) with m the arithmetic mean
        0.5 * (a + b) * (1.0 - zeta * zeta / 3.0)
    } else {
        (b - a) / (b / a).ln()
    }
}

/// Electric body force `-K rho grad(phi)` on velocity faces.
///
/// The face charge density is the difference of per-species logarithmic
/// means. The logarithmic mean is a second-order face average that vanishes
/// with `c1 - c2`, and on Boltzmann data `c = exp(mu -/+ phi)` it turns the
/// force into the exact discrete gradient of `K (c1 + c2)`, so the pressure
/// projection removes it completely and equilibria carry no spurious flow.
pub fn electric_force(
    c1: &ScalarField,
    c2: &ScalarField,
    phi: &ScalarField,
    params: &Params,
) -> VelocityField {
    let spec = phi.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());
    let k = params.kc;
    let grid = Grid::from_spec_unchecked(spec);
    let mut f = VelocityField::zeros(&grid);
    for j in 0..ny {
        for i in 1..nx {
            let dphi = phi.at(i, j) - phi.at(i - 1, j);
            let rho = log_mean(c1.at(i - 1, j), c1.at(i, j))
                - log_mean(c2.at(i - 1, j), c2.at(i, j));
            f.set_ux(i, j, -k * rho * dphi / hx);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let dphi = phi.at(i, j) - phi.at(i, j - 1);
            let rho = log_mean(c1.at(i, j - 1), c1.at(i, j))
                - log_mean(c2.at(i, j - 1), c2.at(i, j));
            f.set_uy(i, j, -k * rho * dphi / hy);
        }
    }
    f
}

/// Explicit viscous stability bound for the step.
pub fn viscous_dt_limit(spec: crate::grid::GridSpec, nu: f64) -> f64 {
    0.25 * spec.h_min() * spec.h_min() / nu
}

fn viscous_rate(u: &VelocityField, nu: f64, bc: FlowBc, out: &mut VelocityField) {
    let spec = u.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let ihx2 = 1.0 / (spec.hx() * spec.hx());
    let ihy2 = 1.0 / (spec.hy() * spec.hy());
    match bc {
        FlowBc::NoSlip => {
            // interior x-faces; wall-normal faces stay pinned at zero
            for j in 0..ny {
                for i in 1..nx {
                    let c = u.ux(i, j);
                    let lapx = (u.ux(i - 1, j) - 2.0 * c + u.ux(i + 1, j)) * ihx2;
                    let south = if j > 0 { u.ux(i, j - 1) } else { -c };
                    let north = if j + 1 < ny { u.ux(i, j + 1) } else { -c };
                    let lapy = (south - 2.0 * c + north) * ihy2;
                    out.set_ux(i, j, nu * (lapx + lapy));
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    let c = u.uy(i, j);
                    let west = if i > 0 { u.uy(i - 1, j) } else { -c };
                    let east = if i + 1 < nx { u.uy(i + 1, j) } else { -c };
                    let lapx = (west - 2.0 * c + east) * ihx2;
                    let lapy = (u.uy(i, j - 1) - 2.0 * c + u.uy(i, j + 1)) * ihy2;
                    out.set_uy(i, j, nu * (lapx + lapy));
                }
            }
        }
        FlowBc::Periodic => {
            // faces i = 0..nx-1 are independent; the i = nx column mirrors i = 0
            for j in 0..ny {
                for i in 0..nx {
                    let c = u.ux(i, j);
                    let w = u.ux((i + nx - 1) % nx, j);
                    let e = u.ux((i + 1) % nx, j);
                    let s = u.ux(i, (j + ny - 1) % ny);
                    let n = u.ux(i, (j + 1) % ny);
                    out.set_ux(i, j, nu * ((w - 2.0 * c + e) * ihx2 + (s - 2.0 * c + n) * ihy2));
                }
            }
            for j in 0..ny {
                for i in 0..nx {
                    let c = u.uy(i, j);
                    let w = u.uy((i + nx - 1) % nx, j);
                    let e = u.uy((i + 1) % nx, j);
                    let s = u.uy(i, (j + ny - 1) % ny);
                    let n = u.uy(i, (j + 1) % ny);
                    out.set_uy(i, j, nu * ((w - 2.0 * c + e) * ihx2 + (s - 2.0 * c + n) * ihy2));
                }
            }
        }
    }
}

fn mirror_periodic(u: &mut VelocityField) {
    let spec = u.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    for j in 0..ny {
        let v = u.ux(0, j);
        u.set_ux(nx, j, v);
    }
    for i in 0..nx {
        let v = u.uy(i, 0);
        u.set_uy(i, ny, v);
    }
}

/// One explicit step shared by the wall and periodic configurations. Returns
/// the projection potential (the pressure at stationarity) and the velocity.
fn advance(
    u: &VelocityField,
    force: &VelocityField,
    params: &Params,
    dt: f64,
    tol: f64,
    bc: FlowBc,
    phi_guess: Option<&ScalarField>,
) -> Result<(ScalarField, VelocityField)> {
    let spec = u.spec();
    let limit = viscous_dt_limit(spec, params.nu);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStepTooLarge { dt, limit });
    }
    let grid = Grid::from_spec_unchecked(spec);
    let mut rate = VelocityField::zeros(&grid);
    viscous_rate(u, params.nu, bc, &mut rate);
    let mut star = u.clone();
    match bc {
        FlowBc::NoSlip => {
            let (nx, ny) = (spec.nx, spec.ny);
            for j in 0..ny {
                for i in 1..nx {
                    let v = u.ux(i, j) + dt * (rate.ux(i, j) + force.ux(i, j));
                    star.set_ux(i, j, v);
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    let v = u.uy(i, j) + dt * (rate.uy(i, j) + force.uy(i, j));
                    star.set_uy(i, j, v);
                }
            }
            star.zero_boundary_normal();
            elliptic::solve_pressure_projection_with_guess(&star, dt, tol, phi_guess)
        }
        FlowBc::Periodic => {
            let (nx, ny) = (spec.nx, spec.ny);
            for j in 0..ny {
                for i in 0..nx {
                    let vx = u.ux(i, j) + dt * (rate.ux(i, j) + force.ux(i, j));
                    star.set_ux(i, j, vx);
                    let vy = u.uy(i, j) + dt * (rate.uy(i, j) + force.uy(i, j));
                    star.set_uy(i, j, vy);
                }
            }
            mirror_periodic(&mut star);
            let (phi, mut unew) = project_periodic(&star, dt, tol, phi_guess)?;
            mirror_periodic(&mut unew);
            Ok((phi, unew))
        }
    }
}

/// Periodic counterpart of the pressure projection.
fn project_periodic(
    u_star: &VelocityField,
    dt: f64,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, VelocityField)> {
    let spec = u_star.spec();
    let div = u_star.divergence();
    let b: Vec<f64> = div.values().iter().map(|d| -d / dt).collect();
    let op = PoissonOp { spec, bc: ScalarBc::Periodic, extra_diag: None };
    let cap = elliptic::iteration_cap(spec);
    let (phi, report) = elliptic::cg_solve(&op, &b, guess.map(|g| g.values()), tol / dt, cap);
    if !report.converged {
        return Err(Error::NonConvergence {
            what: "periodic pressure projection".into(),
            iterations: report.iterations,
            residual: report.residual_l2 * dt,
            tol,
        });
    }
    let phi = ScalarField::from_vec(spec, phi);
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());
    let mut u = u_star.clone();
    for j in 0..ny {
        for i in 0..nx {
            let w = if i > 0 { phi.at(i - 1, j) } else { phi.at(nx - 1, j) };
            u.set_ux(i, j, u.ux(i, j) - dt * (phi.at(i, j) - w) / hx);
            let s = if j > 0 { phi.at(i, j - 1) } else { phi.at(i, ny - 1) };
            u.set_uy(i, j, u.uy(i, j) - dt * (phi.at(i, j) - s) / hy);
        }
    }
    Ok((phi, u))
}

/// Advances the velocity one explicit step under the given face force with
/// no-slip walls: viscous update, wall enforcement, then projection. The
/// returned field has zero normal wall faces and `||div u||_2 <= tol`.
pub fn stokes_step(
    u: &VelocityField,
    force: &VelocityField,
    params: &Params,
    dt: f64,
    tol: f64,
) -> Result<VelocityField> {
    advance(u, force, params, dt, tol, FlowBc::NoSlip, None).map(|(_, u)| u)
}

/// [`stokes_step`] that also returns the projection potential and reuses a
/// previous potential as the linear-solver warm start.
pub fn stokes_step_full(
    u: &VelocityField,
    force: &VelocityField,
    params: &Params,
    dt: f64,
    tol: f64,
    phi_guess: Option<&ScalarField>,
) -> Result<(ScalarField, VelocityField)> {
    advance(u, force, params, dt, tol, FlowBc::NoSlip, phi_guess)
}

/// Periodic configuration of the same step kernel; wrap-around in both
/// directions and no walls. Used by the viscous eigenmode decay tests.
pub fn stokes_step_periodic(
    u: &VelocityField,
    force: &VelocityField,
    params: &Params,
    dt: f64,
    tol: f64,
) -> Result<VelocityField> {
    advance(u, force, params, dt, tol, FlowBc::Periodic, None).map(|(_, u)| u)
}

/// Steady Stokes solve by pseudo-time iteration of [`stokes_step`] from rest.
/// Converges when the velocity change per unit pseudo-time drops below `tol`;
/// returns the velocity and the mean-zero pressure.
pub fn steady_stokes(
    force: &VelocityField,
    params: &Params,
    tol: f64,
) -> Result<(VelocityField, ScalarField)> {
    assert!(tol > 0.0);
    let spec = force.spec();
    let grid = Grid::from_spec_unchecked(spec);
    let dt = viscous_dt_limit(spec, params.nu);
    let proj_tol = (tol * dt).min(1e-12);
    let mut u = VelocityField::zeros(&grid);
    let mut phi = ScalarField::zeros(&grid);
    let cap = 40 * spec.nx * spec.ny;
    let mut residual = f64::INFINITY;
    for it in 0..cap {
        let (phi_new, u_new) =
            advance(&u, force, params, dt, proj_tol, FlowBc::NoSlip, Some(&phi))?;
        residual = l2_norm_velocity(&u_new.sub(&u)) / dt;
        u = u_new;
        phi = phi_new;
        if residual < tol {
            phi.remove_mean();
            return Ok((u, phi));
        }
        let _ = it;
    }
    Err(Error::NonConvergence {
        what: "steady Stokes pseudo-time iteration".into(),
        iterations: cap,
        residual,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::grad;
    use crate::grid::{BoundaryData, BoundaryMode, GridSpec, build_grid, l2_norm, linf_norm};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        build_grid(GridSpec::unit_square(n)).unwrap()
    }

    #[test]
    fn force_vanishes_for_neutral_or_flat() {
        let g = grid(12);
        let c = ScalarField::from_fn(&g, |x, y| 1.0 + x * y);
        let phi = ScalarField::from_fn(&g, |x, y| (x - y).sin());
        let f = electric_force(&c, &c, &phi, &Params::default());
        assert_eq!(l2_norm_velocity(&f), 0.0);
        let c2 = ScalarField::from_fn(&g, |x, _| 0.5 + x);
        let flat = ScalarField::constant(&g, 2.0);
        let f = electric_force(&c, &c2, &flat, &Params::default());
        assert_eq!(l2_norm_velocity(&f), 0.0);
    }

    #[test]
    fn force_affine_potential_exact() {
        let g = grid(8);
        // rho = 1: c1 = 2, c2 = 1; phi = x; K = 2 -> fx = -2 on interior faces
        let c1 = ScalarField::constant(&g, 2.0);
        let c2 = ScalarField::constant(&g, 1.0);
        let phi = ScalarField::from_fn(&g, |x, _| x);
        let params = Params { kc: 2.0, ..Params::default() };
        let f = electric_force(&c1, &c2, &phi, &params);
        for j in 0..8 {
            for i in 1..8 {
                assert!((f.ux(i, j) + 2.0).abs() < 1e-13, "fx {}", f.ux(i, j));
            }
        }
    }

    #[test]
    fn force_on_boltzmann_data_is_discrete_gradient() {
        let g = grid(24);
        let phi = ScalarField::from_fn(&g, |x, y| 0.3 * (2.0 * PI * x).sin() * (1.0 - y));
        let c1 = ScalarField::from_vec(g.spec(), phi.values().iter().map(|p| (-p).exp()).collect());
        let c2 = ScalarField::from_vec(g.spec(), phi.values().iter().map(|p| p.exp()).collect());
        let params = Params { kc: 1.7, ..Params::default() };
        let f = electric_force(&c1, &c2, &phi, &params);
        let p = ScalarField::from_vec(
            g.spec(),
            c1.values()
                .iter()
                .zip(c2.values())
                .map(|(a, b)| params.kc * (a + b))
                .collect(),
        );
        let gp = grad(&p);
        let spec = g.spec();
        let mut max_diff = 0.0_f64;
        for j in 0..spec.ny {
            for i in 1..spec.nx {
                max_diff = max_diff.max((f.ux(i, j) - gp.ux(i, j)).abs());
            }
        }
        for j in 1..spec.ny {
            for i in 0..spec.nx {
                max_diff = max_diff.max((f.uy(i, j) - gp.uy(i, j)).abs());
            }
        }
        assert!(max_diff < 1e-12, "force deviates from gradient by {max_diff}");
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid(8);
        let u = VelocityField::zeros(&g);
        let f = VelocityField::zeros(&g);
        let params = Params::default();
        let dt = viscous_dt_limit(g.spec(), params.nu);
        let out = stokes_step(&u, &f, &params, dt, 1e-12).unwrap();
        assert_eq!(l2_norm_velocity(&out), 0.0);
    }

    #[test]
    fn gradient_forces_are_absorbed() {
        let g = grid(32);
        let psi = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let f = grad(&psi);
        let params = Params::default();
        let dt = viscous_dt_limit(g.spec(), params.nu);
        let out = stokes_step(&VelocityField::zeros(&g), &f, &params, dt, 1e-13).unwrap();
        assert!(
            l2_norm_velocity(&out) < 1e-10,
            "gradient force produced flow {}",
            l2_norm_velocity(&out)
        );
    }

    #[test]
    fn oversized_step_rejected() {
        let g = grid(8);
        let u = VelocityField::zeros(&g);
        let params = Params::default();
        let dt = 2.0 * viscous_dt_limit(g.spec(), params.nu);
        assert!(matches!(
            stokes_step(&u, &VelocityField::zeros(&g), &params, dt, 1e-10),
            Err(Error::TimeStepTooLarge { .. })
        ));
    }

    #[test]
    fn viscous_decay_is_monotone() {
        let g = grid(16);
        let mut u = VelocityField::from_stream(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let f = VelocityField::zeros(&g);
        let params = Params::default();
        let dt = viscous_dt_limit(g.spec(), params.nu);
        let mut prev = l2_norm_velocity(&u);
        for _ in 0..30 {
            u = stokes_step(&u, &f, &params, dt, 1e-12).unwrap();
            let n = l2_norm_velocity(&u);
            assert!(n <= prev * (1.0 + 1e-12), "energy grew: {n} > {prev}");
            assert!(l2_norm(&u.divergence()) <= 1e-12);
            prev = n;
        }
    }

    #[test]
    fn periodic_eigenmode_decay_rate() {
        // u = (sin(pi x) cos(pi y), -cos(pi x) sin(pi y)) on [0,2]^2 decays
        // at 2 nu pi^2
        let spec = GridSpec::new(64, 64, 2.0, 2.0);
        let g = build_grid(spec).unwrap();
        let params = Params { nu: 1.0, ..Params::default() };
        let mut u = VelocityField::from_fn(
            &g,
            |x, y| (PI * x).sin() * (PI * y).cos(),
            |x, y| -(PI * x).cos() * (PI * y).sin(),
        );
        assert!(linf_norm(&u.divergence()) < 1e-12);
        let dt = viscous_dt_limit(spec, params.nu);
        let f = VelocityField::zeros(&g);
        let e0 = l2_norm_velocity(&u);
        let steps = 200;
        for _ in 0..steps {
            u = stokes_step_periodic(&u, &f, &params, dt, 1e-12).unwrap();
        }
        let e1 = l2_norm_velocity(&u);
        let rate = -(e1 / e0).ln() / (steps as f64 * dt);
        let expected = 2.0 * params.nu * PI * PI;
        assert!(
            (rate - expected).abs() < 0.05 * expected,
            "rate {rate} vs {expected}"
        );
    }

    #[test]
    fn steady_stokes_zero_force() {
        let g = grid(12);
        let (u, p) = steady_stokes(&VelocityField::zeros(&g), &Params::default(), 1e-10).unwrap();
        assert!(l2_norm_velocity(&u) < 1e-12);
        assert!(linf_norm(&p) < 1e-10);
    }

    #[test]
    fn steady_stokes_gradient_force_pressure() {
        let g = grid(24);
        let psi = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let f = grad(&psi);
        let (u, p) = steady_stokes(&f, &Params::default(), 1e-9).unwrap();
        assert!(l2_norm_velocity(&u) < 1e-7, "|u| = {}", l2_norm_velocity(&u));
        let mut psi0 = psi.clone();
        psi0.remove_mean();
        let err = linf_norm(&p.sub(&psi0));
        assert!(err < 5e-3, "pressure error {err}"); // O(h^2) reconstruction
    }

    #[test]
    fn steady_stokes_linear_in_force() {
        let g = grid(16);
        let f1 = VelocityField::from_fn(
            &g,
            |x, y| -(PI * x).sin() * (PI * y).cos(),
            |x, y| (PI * x).cos() * (PI * y).sin(),
        );
        let s = 3.0;
        let f2 = f1.scaled(s);
        let params = Params::default();
        let (u1, _) = steady_stokes(&f1, &params, 1e-10).unwrap();
        let (u2, _) = steady_stokes(&f2, &params, 1e-10).unwrap();
        assert!(linf_norm(&u1.divergence()) <= 1e-9);
        let n1 = l2_norm_velocity(&u1);
        let n2 = l2_norm_velocity(&u2);
        assert!(n1 > 0.0, "curl-type force must drive flow");
        assert!((n2 / n1 - s).abs() < 1e-3, "scaling ratio {}", n2 / n1);
        assert!(u1.linf() > 0.0);
    }

    #[test]
    fn equilibrium_boundary_force_keeps_fluid_at_rest() {
        // Boltzmann concentrations + consistent potential: the force is a
        // discrete gradient, so a full wall step leaves no flow
        let g = grid(16);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let _ = bd;
        let phi = ScalarField::from_fn(&g, |x, y| 0.2 * (PI * x).cos() * (PI * y).cos());
        let c1 = ScalarField::from_vec(g.spec(), phi.values().iter().map(|p| (-p).exp()).collect());
        let c2 = ScalarField::from_vec(g.spec(), phi.values().iter().map(|p| p.exp()).collect());
        let params = Params { kc: 2.5, ..Params::default() };
        let f = electric_force(&c1, &c2, &phi, &params);
        let dt = viscous_dt_limit(g.spec(), params.nu);
        let u = stokes_step(&VelocityField::zeros(&g), &f, &params, dt, 1e-13).unwrap();
        assert!(l2_norm_velocity(&u) < 1e-11, "|u| = {}", l2_norm_velocity(&u));
    }
}
