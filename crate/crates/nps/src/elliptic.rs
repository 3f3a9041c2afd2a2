//! Constant-coefficient elliptic solves on the cell-centered grid:
//! the potential Poisson problem, harmonic extension of boundary data, and
//! the pressure-projection Poisson problem.
//!
//! Discretization is the 5-point Laplacian with ghost cells: Dirichlet values
//! enter through linear extrapolation (`ghost = 2W - c`), Neumann walls
//! mirror (`ghost = c`). All systems are solved by conjugate gradients with
//! diagonal preconditioning; the singular Neumann/periodic systems are pinned
//! by mean-zero projection each iteration.

use crate::error::{Error, Result};
use crate::grid::{
    BoundaryData, Grid, GridSpec, Params, ScalarField, Side, VelocityField, build_grid, l2_norm,
};

/// Outcome of one conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    /// Discrete L2 norm of the final residual, in the units of the original
    /// equation (including any coefficient).
    pub residual_l2: f64,
    pub converged: bool,
}

/// Wall treatment for the scalar Laplacian.
#[derive(Clone, Copy)]
pub(crate) enum ScalarBc {
    /// Homogeneous-ghost Dirichlet; inhomogeneous traces are folded into the
    /// right-hand side by [`dirichlet_rhs`].
    Dirichlet,
    /// Mirror ghost (homogeneous Neumann).
    Neumann,
    /// Wrap-around.
    Periodic,
}

/// `A = -lap` (optionally plus a diagonal field), cell-centered.
pub(crate) struct PoissonOp<'a> {
    pub spec: GridSpec,
    pub bc: ScalarBc,
    pub extra_diag: Option<&'a [f64]>,
}

impl PoissonOp<'_> {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let ihx2 = 1.0 / (self.spec.hx() * self.spec.hx());
        let ihy2 = 1.0 / (self.spec.hy() * self.spec.hy());
        let d0 = 2.0 * (ihx2 + ihy2);
        // bulk stencil
        for j in 1..ny - 1 {
            let row = j * nx;
            for i in 1..nx - 1 {
                let c = row + i;
                out[c] = d0 * x[c]
                    - (x[c - 1] + x[c + 1]) * ihx2
                    - (x[c - nx] + x[c + nx]) * ihy2;
            }
        }
        // ring cells with wall logic
        let mut ring = |i: usize, j: usize| {
            let c = j * nx + i;
            let west = if i > 0 { x[c - 1] } else { self.ghost(x, c, nx - 1 + j * nx) };
            let east = if i + 1 < nx { x[c + 1] } else { self.ghost(x, c, j * nx) };
            let south = if j > 0 { x[c - nx] } else { self.ghost(x, c, (ny - 1) * nx + i) };
            let north = if j + 1 < ny { x[c + nx] } else { self.ghost(x, c, i) };
            out[c] = (x[c] - west) * ihx2
                + (x[c] - east) * ihx2
                + (x[c] - south) * ihy2
                + (x[c] - north) * ihy2;
        };
        for i in 0..nx {
            ring(i, 0);
            ring(i, ny - 1);
        }
        for j in 1..ny - 1 {
            ring(0, j);
            ring(nx - 1, j);
        }
        if let Some(d) = self.extra_diag {
            for c in 0..nx * ny {
                out[c] += d[c] * x[c];
            }
        }
    }

    #[inline]
    fn ghost(&self, x: &[f64], c: usize, wrap: usize) -> f64 {
        match self.bc {
            ScalarBc::Dirichlet => -x[c],
            ScalarBc::Neumann => x[c],
            ScalarBc::Periodic => x[wrap],
        }
    }

    /// Diagonal of the operator, for Jacobi preconditioning.
    pub fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let ihx2 = 1.0 / (self.spec.hx() * self.spec.hx());
        let ihy2 = 1.0 / (self.spec.hy() * self.spec.hy());
        let wall = |at_wall: bool, ih2: f64| -> f64 {
            if !at_wall {
                return ih2;
            }
            match self.bc {
                ScalarBc::Dirichlet => 2.0 * ih2,
                ScalarBc::Neumann => 0.0,
                ScalarBc::Periodic => ih2,
            }
        };
        let mut d = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                d[c] = wall(i == 0, ihx2)
                    + wall(i + 1 == nx, ihx2)
                    + wall(j == 0, ihy2)
                    + wall(j + 1 == ny, ihy2);
            }
        }
        if let Some(extra) = self.extra_diag {
            for c in 0..nx * ny {
                d[c] += extra[c];
            }
        }
        d
    }

    fn is_singular(&self) -> bool {
        matches!(self.bc, ScalarBc::Neumann | ScalarBc::Periodic) && self.extra_diag.is_none()
    }
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= m;
    }
}

/// Preconditioned CG on `A x = b` with the algebraic tolerance measured in the
/// discrete L2 norm `sqrt(sum r^2 hx hy)`. Warm-startable through `x0`.
pub(crate) fn cg_solve(
    op: &PoissonOp<'_>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    cap: usize,
) -> (Vec<f64>, EllipticSolveReport) {
    let n = b.len();
    let area = op.spec.cell_area();
    let singular = op.is_singular();
    let mut rhs = b.to_vec();
    if singular {
        remove_mean(&mut rhs);
    }
    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let diag = op.diagonal();
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for c in 0..n {
        r[c] = rhs[c] - r[c];
    }
    if singular {
        remove_mean(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut res = (r.iter().map(|v| v * v).sum::<f64>() * area).sqrt();
    let mut iterations = 0;
    while res > tol && iterations < cap {
        op.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break; // stagnated search direction
        }
        let alpha = rz / pap;
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        if singular {
            remove_mean(&mut r);
        }
        for c in 0..n {
            z[c] = r[c] / diag[c];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
        rz = rz_new;
        res = (r.iter().map(|v| v * v).sum::<f64>() * area).sqrt();
        iterations += 1;
    }
    if singular {
        remove_mean(&mut x);
    }
    let report = EllipticSolveReport { iterations, residual_l2: res, converged: res <= tol };
    (x, report)
}

/// Iteration cap used by all elliptic solves.
pub(crate) fn iteration_cap(spec: GridSpec) -> usize {
    10 * spec.nx * spec.ny
}

/// Folds inhomogeneous Dirichlet traces into the right-hand side of the
/// homogeneous-ghost operator: each boundary face contributes `2 W / h^2`.
pub(crate) fn dirichlet_rhs(spec: GridSpec, w: &BoundaryData) -> Vec<f64> {
    let (nx, ny) = (spec.nx, spec.ny);
    let ihx2 = 1.0 / (spec.hx() * spec.hx());
    let ihy2 = 1.0 / (spec.hy() * spec.hy());
    let mut g = vec![0.0; nx * ny];
    for i in 0..nx {
        g[i] += 2.0 * w.side(Side::Bottom).w[i] * ihy2;
        g[(ny - 1) * nx + i] += 2.0 * w.side(Side::Top).w[i] * ihy2;
    }
    for j in 0..ny {
        g[j * nx] += 2.0 * w.side(Side::Left).w[j] * ihx2;
        g[j * nx + nx - 1] += 2.0 * w.side(Side::Right).w[j] * ihx2;
    }
    g
}

/// Solves `-eps lap(phi) = rho` with Dirichlet trace `w.w`, to the given
/// absolute tolerance on the discrete L2 residual of that equation.
pub fn solve_potential(
    rho: &ScalarField,
    w: &BoundaryData,
    params: &Params,
    tol: f64,
) -> Result<(ScalarField, EllipticSolveReport)> {
    solve_potential_with_guess(rho, w, params, tol, None)
}

/// [`solve_potential`] warm-started from a previous solution.
pub fn solve_potential_with_guess(
    rho: &ScalarField,
    w: &BoundaryData,
    params: &Params,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, EllipticSolveReport)> {
    assert!(tol > 0.0, "tolerance must be positive");
    let spec = rho.spec();
    assert_eq!(spec, w.spec, "boundary data grid mismatch");
    let eps = params.eps;
    let mut b = dirichlet_rhs(spec, w);
    for (bc, rc) in b.iter_mut().zip(rho.values()) {
        *bc += rc / eps;
    }
    let op = PoissonOp { spec, bc: ScalarBc::Dirichlet, extra_diag: None };
    let (x, mut report) =
        cg_solve(&op, &b, guess.map(|g| g.values()), tol / eps, iteration_cap(spec));
    report.residual_l2 *= eps;
    if !report.converged {
        return Err(Error::NonConvergence {
            what: "potential Poisson solve".into(),
            iterations: report.iterations,
            residual: report.residual_l2,
            tol,
        });
    }
    Ok((ScalarField::from_vec(spec, x), report))
}

/// Harmonic extension of the `w` trace into the domain:
/// `lap(wtilde) = 0`, `wtilde|boundary = w`.
pub fn harmonic_extension(w: &BoundaryData, tol: f64) -> Result<ScalarField> {
    let grid = build_grid(w.spec)?;
    let rho = ScalarField::zeros(&grid);
    let unit = Params { eps: 1.0, ..Params::default() };
    let (field, _) = solve_potential(&rho, w, &unit, tol)?;
    Ok(field)
}

/// Face-centered gradient of a cell field. Interior faces use the centered
/// two-cell difference; boundary faces extrapolate with a one-sided quadratic
/// fit, which is exact for affine fields.
pub fn grad(f: &ScalarField) -> VelocityField {
    let spec = f.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());
    let grid = Grid::from_spec_unchecked(spec);
    let mut g = VelocityField::zeros(&grid);
    for j in 0..ny {
        for i in 1..nx {
            g.set_ux(i, j, (f.at(i, j) - f.at(i - 1, j)) / hx);
        }
        g.set_ux(0, j, (2.0 * (f.at(1, j) - f.at(0, j)) - (f.at(2, j) - f.at(1, j))) / hx);
        g.set_ux(
            nx,
            j,
            (2.0 * (f.at(nx - 1, j) - f.at(nx - 2, j)) - (f.at(nx - 2, j) - f.at(nx - 3, j))) / hx,
        );
    }
    for i in 0..nx {
        for j in 1..ny {
            g.set_uy(i, j, (f.at(i, j) - f.at(i, j - 1)) / hy);
        }
        g.set_uy(i, 0, (2.0 * (f.at(i, 1) - f.at(i, 0)) - (f.at(i, 2) - f.at(i, 1))) / hy);
        g.set_uy(
            i,
            ny,
            (2.0 * (f.at(i, ny - 1) - f.at(i, ny - 2)) - (f.at(i, ny - 2) - f.at(i, ny - 3))) / hy,
        );
    }
    g
}

/// Projects `u_star` onto the discretely divergence-free space with
/// no-penetration walls: zeroes the boundary normal faces, solves the
/// homogeneous-Neumann Poisson problem `lap(phi) = div(u_star)/dt`, and
/// subtracts `dt grad(phi)` on interior faces. Returns the mean-zero `phi`
/// and the projected velocity, with `||div u||_2 <= tol`.
pub fn solve_pressure_projection(
    u_star: &VelocityField,
    dt: f64,
    tol: f64,
) -> Result<(ScalarField, VelocityField)> {
    solve_pressure_projection_with_guess(u_star, dt, tol, None)
}

pub fn solve_pressure_projection_with_guess(
    u_star: &VelocityField,
    dt: f64,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, VelocityField)> {
    assert!(dt > 0.0 && tol > 0.0);
    let spec = u_star.spec();
    let mut u = u_star.clone();
    u.zero_boundary_normal();
    let div = u.divergence();
    // A phi = -div/dt with A = -lap (Neumann)
    let b: Vec<f64> = div.values().iter().map(|d| -d / dt).collect();
    let op = PoissonOp { spec, bc: ScalarBc::Neumann, extra_diag: None };
    let (phi, report) =
        cg_solve(&op, &b, guess.map(|g| g.values()), tol / dt, iteration_cap(spec));
    if !report.converged {
        return Err(Error::NonConvergence {
            what: "pressure projection solve".into(),
            iterations: report.iterations,
            residual: report.residual_l2 * dt,
            tol,
        });
    }
    let phi = ScalarField::from_vec(spec, phi);
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (spec.hx(), spec.hy());
    for j in 0..ny {
        for i in 1..nx {
            let v = u.ux(i, j) - dt * (phi.at(i, j) - phi.at(i - 1, j)) / hx;
            u.set_ux(i, j, v);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let v = u.uy(i, j) - dt * (phi.at(i, j) - phi.at(i, j - 1)) / hy;
            u.set_uy(i, j, v);
        }
    }
    Ok((phi, u))
}

impl Grid {
    /// Internal constructor for contexts where the spec is already validated
    /// (every public field carries a validated spec).
    pub(crate) fn from_spec_unchecked(spec: GridSpec) -> Grid {
        build_grid(spec).expect("field carried an invalid spec")
    }
}

/// Discrete L2 norm of the Laplacian of a field with the given Dirichlet
/// traces; used by tests and residual checks.
pub fn laplacian_residual(f: &ScalarField, w: &BoundaryData, eps: f64, rho: &ScalarField) -> f64 {
    let spec = f.spec();
    let op = PoissonOp { spec, bc: ScalarBc::Dirichlet, extra_diag: None };
    let mut ax = vec![0.0; spec.n_cells()];
    op.apply(f.values(), &mut ax);
    let g = dirichlet_rhs(spec, w);
    let r: Vec<f64> = (0..spec.n_cells())
        .map(|c| rho.values()[c] - eps * (ax[c] - g[c]))
        .collect();
    l2_norm(&ScalarField::from_vec(spec, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, build_grid, l2_norm_velocity, linf_norm};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        build_grid(GridSpec::unit_square(n)).unwrap()
    }

    fn params_eps(eps: f64) -> Params {
        Params { eps, ..Params::default() }
    }

    #[test]
    fn constant_boundary_constant_solution() {
        let g = grid(16);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 5.0).unwrap();
        let rho = ScalarField::zeros(&g);
        let (phi, rep) = solve_potential(&rho, &bd, &params_eps(1.0), 1e-10).unwrap();
        assert!(rep.converged);
        for v in phi.values() {
            assert!((v - 5.0).abs() < 1e-9, "phi = {v}");
        }
    }

    #[test]
    fn manufactured_solution_second_order() {
        // -eps lap(sin(pi x) sin(pi y)) = 2 eps pi^2 sin sin
        let eps = 1.3;
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = grid(n);
            let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
            let rho = ScalarField::from_fn(&g, |x, y| {
                2.0 * eps * PI * PI * (PI * x).sin() * (PI * y).sin()
            });
            let (phi, _) = solve_potential(&rho, &bd, &params_eps(eps), 1e-11).unwrap();
            let exact = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
            errs.push(linf_norm(&phi.sub(&exact)));
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.5, "refinement ratio {ratio}, errs {errs:?}");
    }

    #[test]
    fn linear_in_inverse_eps() {
        let g = grid(24);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let rho = ScalarField::from_fn(&g, |x, y| (2.0 * PI * x).cos() * (PI * y).sin());
        let (phi1, _) = solve_potential(&rho, &bd, &params_eps(1.0), 1e-12).unwrap();
        let (phi2, _) = solve_potential(&rho, &bd, &params_eps(2.0), 1e-12).unwrap();
        let diff = phi1.sub(&phi2.scaled(2.0));
        assert!(l2_norm(&diff) < 1e-10, "eps scaling defect {}", l2_norm(&diff));
    }

    #[test]
    fn superposition() {
        let g = grid(16);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let r1 = ScalarField::from_fn(&g, |x, y| x * y);
        let r2 = ScalarField::from_fn(&g, |x, y| (PI * x).sin() - y);
        let sum = ScalarField::from_vec(
            g.spec(),
            r1.values().iter().zip(r2.values()).map(|(a, b)| a + b).collect(),
        );
        let p = params_eps(1.0);
        let (s1, _) = solve_potential(&r1, &bd, &p, 1e-12).unwrap();
        let (s2, _) = solve_potential(&r2, &bd, &p, 1e-12).unwrap();
        let (s12, _) = solve_potential(&sum, &bd, &p, 1e-12).unwrap();
        let defect = s12.sub(&s1).sub(&s2);
        assert!(l2_norm(&defect) < 1e-10);
    }

    #[test]
    fn discrete_maximum_principle() {
        let g = grid(20);
        let bd = BoundaryData::sample(
            &g,
            BoundaryMode::Dirichlet,
            |_, _, _| 1.0,
            |_, _, _| 1.0,
            |_, x, y| 0.3 * (5.0 * x).sin() - 0.2 * y * y,
        )
        .unwrap();
        let rho = ScalarField::zeros(&g);
        let (phi, _) = solve_potential(&rho, &bd, &params_eps(1.0), 1e-11).unwrap();
        let wmin = Side::ALL
            .iter()
            .flat_map(|&s| bd.side(s).w.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let wmax = Side::ALL
            .iter()
            .flat_map(|&s| bd.side(s).w.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(phi.min() >= wmin - 1e-9, "min {} below {}", phi.min(), wmin);
        assert!(phi.max() <= wmax + 1e-9, "max {} above {}", phi.max(), wmax);
    }

    #[test]
    fn harmonic_extension_trivial_and_affine() {
        let g = grid(16);
        let c = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 3.5).unwrap();
        let w = harmonic_extension(&c, 1e-11).unwrap();
        for v in w.values() {
            assert!((v - 3.5).abs() < 1e-9);
        }
        // x is harmonic and affine, so the discrete solution is exact to tol
        let bx = BoundaryData::sample(&g, BoundaryMode::Dirichlet, |_, _, _| 1.0, |_, _, _| 1.0, |_, x, _| x)
            .unwrap();
        let wx = harmonic_extension(&bx, 1e-12).unwrap();
        let exact = ScalarField::from_fn(&g, |x, _| x);
        assert!(linf_norm(&wx.sub(&exact)) < 1e-9);
    }

    #[test]
    fn harmonic_extension_quadratic_order() {
        // x^2 - y^2 is harmonic; ghost extrapolation is linear so the error
        // is O(h^2)
        let mut errs = Vec::new();
        for n in [16usize, 32] {
            let g = grid(n);
            let bd = BoundaryData::sample(
                &g,
                BoundaryMode::Dirichlet,
                |_, _, _| 1.0,
                |_, _, _| 1.0,
                |_, x, y| x * x - y * y,
            )
            .unwrap();
            let w = harmonic_extension(&bd, 1e-12).unwrap();
            let exact = ScalarField::from_fn(&g, |x, y| x * x - y * y);
            errs.push(linf_norm(&w.sub(&exact)));
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio} errs {errs:?}");
    }

    #[test]
    fn grad_of_constant_and_affine() {
        let g = grid(12);
        let c = ScalarField::constant(&g, 2.0);
        let gc = grad(&c);
        assert_eq!(l2_norm_velocity(&gc), 0.0);
        let f = ScalarField::from_fn(&g, |x, _| 3.0 * x);
        let gf = grad(&f);
        for j in 0..12 {
            for i in 0..=12 {
                assert!((gf.ux(i, j) - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_second_order_on_sine() {
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = grid(n);
            let f = ScalarField::from_fn(&g, |x, _| (PI * x).sin());
            let gf = grad(&f);
            let hx = g.spec().hx();
            let mut emax = 0.0_f64;
            for j in 0..n {
                for i in 0..=n {
                    let x = i as f64 * hx;
                    emax = emax.max((gf.ux(i, j) - PI * (PI * x).cos()).abs());
                }
            }
            errs.push(emax);
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio} errs {errs:?}");
    }

    #[test]
    fn projection_leaves_divergence_free_input() {
        let g = grid(24);
        // build a divergence-free, wall-compatible field by projecting noise
        let mut noisy = VelocityField::from_fn(&g, |x, y| (3.0 * x + y).sin(), |x, y| x - y * y);
        noisy.zero_boundary_normal();
        let (_, u0) = solve_pressure_projection(&noisy, 1.0, 1e-12).unwrap();
        let (phi, u1) = solve_pressure_projection(&u0, 1.0, 1e-12).unwrap();
        assert!(linf_norm(&phi) < 1e-9, "phi should vanish, got {}", linf_norm(&phi));
        let d = u1.sub(&u0);
        assert!(l2_norm_velocity(&d) < 1e-9);
    }

    #[test]
    fn projection_annihilates_gradients() {
        let g = grid(32);
        let psi = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let gp = grad(&psi);
        let (_, u) = solve_pressure_projection(&gp, 1.0, 1e-12).unwrap();
        assert!(
            l2_norm_velocity(&u) < 1e-10,
            "gradient survived projection: {}",
            l2_norm_velocity(&u)
        );
    }

    #[test]
    fn projection_enforces_divergence() {
        let g = grid(16);
        let u_star = VelocityField::from_fn(&g, |x, y| x * y + 0.5, |x, y| (2.0 * x - y).cos());
        let tol = 1e-11;
        let (phi, u) = solve_pressure_projection(&u_star, 0.01, tol).unwrap();
        assert!(l2_norm(&u.divergence()) <= tol);
        assert!(phi.mean().abs() < 1e-12);
        // walls stay sealed
        for j in 0..16 {
            assert_eq!(u.ux(0, j), 0.0);
            assert_eq!(u.ux(16, j), 0.0);
        }
    }

    #[test]
    fn unreachable_tolerance_reports_nonconvergence() {
        let g = grid(8);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let rho = ScalarField::from_fn(&g, |x, y| x + y);
        let err = solve_potential(&rho, &bd, &params_eps(1.0), 1e-300);
        match err {
            Err(Error::NonConvergence { iterations, .. }) => {
                assert_eq!(iterations, iteration_cap(g.spec()));
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
