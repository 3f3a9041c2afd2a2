// timing probe for the 64x64 equilibrium steady solve
use nps::grid::{BoundaryMode, BoundaryData, GridSpec, Params, Side, build_grid};
use nps::steady;
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let n = 64;
    let g = build_grid(GridSpec::unit_square(n)).unwrap();
    let amp = 0.2;
    let w = |s: Side, x: f64, _y: f64| if s == Side::Bottom { amp * (2.0 * PI * x).sin() } else { 0.0 };
    let bd = BoundaryData::sample(
        &g,
        BoundaryMode::Dirichlet,
        |s, x, y| (-w(s, x, y)).exp(),
        |s, x, y| w(s, x, y).exp(),
        w,
    ).unwrap();
    let params = Params::default();
    let t0 = Instant::now();
    let spec = steady::EquilibriumSpec { mu1: 0.0, mu2: 0.0, w: bd.clone() };
    let pb = steady::solve_poisson_boltzmann(&spec, &params, 1e-10).unwrap();
    println!("pb newton: {:?} residual {:.2e}", t0.elapsed(), pb.residual);
    let t0 = Instant::now();
    let pt = steady::solve_steady_nps(&bd, &params, None, 1e-6, 30.0).unwrap();
    let el = t0.elapsed();
    let dphi = nps::grid::linf_norm(&pt.phi.sub(&pb.phi));
    let l2u = nps::grid::l2_norm_velocity(&pt.u);
    println!("pseudo-time: {el:?}  |dphi|_inf = {dphi:.3e}  |u|_2 = {l2u:.3e}");
}
