//! Finite-difference simulator for the two-species Nernst-Planck-Stokes
//! system on a rectangle with Dirichlet boundary data.
//!
//! The solver couples three pieces per time step on a MAC staggered grid:
//! a conjugate-gradient Poisson solve for the electric potential,
//! Scharfetter-Gummel drift-diffusion with upwind advection for the ionic
//! concentrations, and a projection step for the Stokes flow driven by the
//! electric body force. Steady states come either from Newton iteration on
//! the equilibrium (Poisson-Boltzmann) problem or from pseudo-time
//! continuation of the full system, and the diagnostics layer tracks the
//! quantities that decide stability: sup-norm bounds, the boundary
//! flow-criterion integrals, Lyapunov energy decay, and mass conservation.

pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod io;
pub mod nernst_planck;
pub mod scenario;
pub mod simulation;
pub mod steady;
pub mod stokes;

pub use error::{Error, Result};
pub use grid::{
    BoundaryData, BoundaryMode, Grid, GridSpec, Params, ScalarField, Side, VelocityField,
    build_grid,
};
pub use simulation::State;
pub use steady::{EquilibriumSpec, SteadyState};
