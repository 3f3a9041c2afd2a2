//! Rectangular MAC-grid discretization: cell-centered scalar fields,
//! face-centered velocities, boundary traces and discrete norms/integrals.
//!
//! Layout for an `nx x ny` grid on `[0,lx] x [0,ly]`:
//! - scalars: cell centers `((i+0.5)hx, (j+0.5)hy)`, row-major `j*nx + i`
//! - ux: x-normal faces `(i*hx, (j+0.5)hy)`, `(nx+1) x ny`
//! - uy: y-normal faces `((i+0.5)hx, j*hy)`, `nx x (ny+1)`
//! - boundary faces: counterclockwise loop bottom -> right -> top -> left

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the coupled system.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Params {
    /// Diffusivity of the cation species.
    pub d1: f64,
    /// Diffusivity of the anion species.
    pub d2: f64,
    /// Rescaled dielectric permittivity.
    pub eps: f64,
    /// Kinematic viscosity.
    pub nu: f64,
    /// Electric body-force coupling constant.
    pub kc: f64,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("eps", self.eps),
            ("nu", self.nu),
            ("kc", self.kc),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "param {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Self { d1: 1.0, d2: 1.0, eps: 1.0, nu: 1.0, kc: 1.0 }
    }
}

/// Cell counts and physical extents of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self { nx, ny, lx, ly }
    }

    /// Unit square with `n` cells per side.
    pub fn unit_square(n: usize) -> Self {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need nx >= 4 and ny >= 4, got nx={} ny={}",
                self.nx, self.ny
            )));
        }
        if !(self.lx > 0.0 && self.lx.is_finite()) || !(self.ly > 0.0 && self.ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need lx > 0 and ly > 0, got lx={} ly={}",
                self.lx, self.ly
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn h_min(&self) -> f64 {
        self.hx().min(self.hy())
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of boundary faces (= boundary trace samples).
    #[inline]
    pub fn n_boundary_faces(&self) -> usize {
        2 * (self.nx + self.ny)
    }

    #[inline]
    pub fn cell_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn cell_y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

/// Validated grid. Construction is the only fallible step; everything else
/// derives from the spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    spec: GridSpec,
}

/// Builds a validated grid from a spec.
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    Ok(Grid { spec })
}

impl Grid {
    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Boundary face centers in counterclockwise loop order, with the side
    /// and the per-side sample index each face corresponds to.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let s = self.spec;
        let (hx, hy) = (s.hx(), s.hy());
        let mut out = Vec::with_capacity(s.n_boundary_faces());
        for i in 0..s.nx {
            out.push(BoundaryFace { side: Side::Bottom, index: i, x: s.cell_x(i), y: 0.0, ds: hx });
        }
        for j in 0..s.ny {
            out.push(BoundaryFace { side: Side::Right, index: j, x: s.lx, y: s.cell_y(j), ds: hy });
        }
        for k in 0..s.nx {
            let i = s.nx - 1 - k;
            out.push(BoundaryFace { side: Side::Top, index: i, x: s.cell_x(i), y: s.ly, ds: hx });
        }
        for k in 0..s.ny {
            let j = s.ny - 1 - k;
            out.push(BoundaryFace { side: Side::Left, index: j, x: 0.0, y: s.cell_y(j), ds: hy });
        }
        out
    }

    /// Per-side arclength of each face center, measured counterclockwise from
    /// the side's starting corner. Samples are in the side's storage order
    /// (ascending grid index), not loop order.
    pub fn side_arclengths(&self, side: Side) -> Vec<f64> {
        let s = self.spec;
        match side {
            Side::Bottom => (0..s.nx).map(|i| s.cell_x(i)).collect(),
            Side::Right => (0..s.ny).map(|j| s.cell_y(j)).collect(),
            Side::Top => (0..s.nx).map(|i| s.lx - s.cell_x(i)).collect(),
            Side::Left => (0..s.ny).map(|j| s.ly - s.cell_y(j)).collect(),
        }
    }
}

/// One boundary face in the counterclockwise loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub side: Side,
    /// Per-side storage index (i for bottom/top, j for left/right).
    pub index: usize,
    pub x: f64,
    pub y: f64,
    /// Face length.
    pub ds: f64,
}

/// Sides of the rectangle, in counterclockwise loop order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn name(&self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }
}

/// Ionic boundary condition applied on a side. The potential trace is always
/// Dirichlet; this mode governs the concentrations only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Concentrations pinned to the gamma traces.
    Dirichlet,
    /// Zero total normal ionic flux through the wall.
    Blocking,
}

/// Traces on a single side, stored in ascending grid-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideData {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub w: Vec<f64>,
    pub mode: BoundaryMode,
}

/// Boundary traces for all four sides of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub spec: GridSpec,
    pub bottom: SideData,
    pub right: SideData,
    pub top: SideData,
    pub left: SideData,
}

impl BoundaryData {
    /// Builds boundary data by sampling closures at face centers.
    /// `gamma1`, `gamma2`, `w` receive `(side, x, y)`.
    pub fn sample(
        grid: &Grid,
        mode: BoundaryMode,
        gamma1: impl Fn(Side, f64, f64) -> f64,
        gamma2: impl Fn(Side, f64, f64) -> f64,
        w: impl Fn(Side, f64, f64) -> f64,
    ) -> Result<Self> {
        let spec = grid.spec();
        let side = |s: Side| -> SideData {
            let n = match s {
                Side::Bottom | Side::Top => spec.nx,
                Side::Left | Side::Right => spec.ny,
            };
            let pos = |k: usize| match s {
                Side::Bottom => (spec.cell_x(k), 0.0),
                Side::Top => (spec.cell_x(k), spec.ly),
                Side::Left => (0.0, spec.cell_y(k)),
                Side::Right => (spec.lx, spec.cell_y(k)),
            };
            SideData {
                gamma1: (0..n).map(|k| { let (x, y) = pos(k); gamma1(s, x, y) }).collect(),
                gamma2: (0..n).map(|k| { let (x, y) = pos(k); gamma2(s, x, y) }).collect(),
                w: (0..n).map(|k| { let (x, y) = pos(k); w(s, x, y) }).collect(),
                mode,
            }
        };
        let bd = Self {
            spec,
            bottom: side(Side::Bottom),
            right: side(Side::Right),
            top: side(Side::Top),
            left: side(Side::Left),
        };
        bd.validate()?;
        Ok(bd)
    }

    /// Constant traces on all sides.
    pub fn uniform(grid: &Grid, mode: BoundaryMode, g1: f64, g2: f64, w: f64) -> Result<Self> {
        Self::sample(grid, mode, |_, _, _| g1, |_, _, _| g2, |_, _, _| w)
    }

    pub fn side(&self, s: Side) -> &SideData {
        match s {
            Side::Bottom => &self.bottom,
            Side::Right => &self.right,
            Side::Top => &self.top,
            Side::Left => &self.left,
        }
    }

    pub fn side_mut(&mut self, s: Side) -> &mut SideData {
        match s {
            Side::Bottom => &mut self.bottom,
            Side::Right => &mut self.right,
            Side::Top => &mut self.top,
            Side::Left => &mut self.left,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        for s in Side::ALL {
            let d = self.side(s);
            let want = match s {
                Side::Bottom | Side::Top => self.spec.nx,
                Side::Left | Side::Right => self.spec.ny,
            };
            for (name, v) in [("gamma1", &d.gamma1), ("gamma2", &d.gamma2), ("w", &d.w)] {
                if v.len() != want {
                    violations.push(format!(
                        "{}.{}: expected {} samples, got {}",
                        s.name(), name, want, v.len()
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    violations.push(format!("{}.{}: non-finite sample", s.name(), name));
                }
            }
            if d.mode == BoundaryMode::Dirichlet {
                for (name, v) in [("gamma1", &d.gamma1), ("gamma2", &d.gamma2)] {
                    if let Some((k, bad)) =
                        v.iter().enumerate().find(|(_, x)| !(**x > 0.0))
                    {
                        violations.push(format!(
                            "{}.{}: must be strictly positive, sample {} is {}",
                            s.name(), name, k, bad
                        ));
                    }
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidBoundary(violations))
        }
    }

    /// All sides Dirichlet?
    pub fn all_dirichlet(&self) -> bool {
        Side::ALL.iter().all(|&s| self.side(s).mode == BoundaryMode::Dirichlet)
    }

    /// Assembles one trace component into a closed counterclockwise loop.
    pub fn loop_trace(&self, pick: impl Fn(&SideData) -> &[f64]) -> BoundaryTrace {
        let mut values = Vec::with_capacity(self.spec.n_boundary_faces());
        values.extend_from_slice(pick(&self.bottom));
        values.extend_from_slice(pick(&self.right));
        values.extend(pick(&self.top).iter().rev());
        values.extend(pick(&self.left).iter().rev());
        BoundaryTrace { values }
    }

    pub fn gamma1_loop(&self) -> BoundaryTrace {
        self.loop_trace(|d| &d.gamma1)
    }

    pub fn gamma2_loop(&self) -> BoundaryTrace {
        self.loop_trace(|d| &d.gamma2)
    }

    pub fn w_loop(&self) -> BoundaryTrace {
        self.loop_trace(|d| &d.w)
    }
}

/// Samples of a scalar quantity on the full closed boundary loop,
/// counterclockwise, one value per boundary face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Closed-loop integral of `f` against the tangential derivative of `g`:
/// `sum_k f_k (g_{k+1} - g_{k-1}) / 2` over the counterclockwise loop.
///
/// The centered difference already carries the arclength weight of the
/// trapezoid rule, which cancels against the measure; this form satisfies the
/// discrete integration-by-parts identity exactly, so swapping the arguments
/// flips the sign to machine precision even with hx != hy.
pub fn boundary_tangential_integral(f: &BoundaryTrace, g: &BoundaryTrace) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::TraceMismatch { expected: f.len(), got: g.len() });
    }
    let n = f.len();
    if n < 3 {
        return Err(Error::InsufficientData(
            "boundary loop needs at least 3 samples".into(),
        ));
    }
    let fv = &f.values;
    let gv = &g.values;
    let mut acc = 0.0;
    for k in 0..n {
        let gp = gv[(k + 1) % n];
        let gm = gv[(k + n - 1) % n];
        acc += fv[k] * (gp - gm) * 0.5;
    }
    Ok(acc)
}

/// Cell-centered scalar field tied to a grid spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    spec: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        let spec = grid.spec();
        Self { spec, data: vec![0.0; spec.n_cells()] }
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        let spec = grid.spec();
        Self { spec, data: vec![v; spec.n_cells()] }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let spec = grid.spec();
        let mut data = Vec::with_capacity(spec.n_cells());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                data.push(f(spec.cell_x(i), spec.cell_y(j)));
            }
        }
        Self { spec, data }
    }

    pub fn from_vec(spec: GridSpec, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), spec.n_cells(), "field shape mismatch");
        Self { spec, data }
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.spec.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.spec.nx + i] = v;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Discrete integral `sum f hx hy`.
    pub fn mass(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.spec.cell_area()
    }

    /// Mean value over the domain.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Subtracts the mean in place.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.data {
            *v -= m;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { spec: self.spec, data: self.data.iter().map(|v| a * v).collect() }
    }

    /// Component-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.spec, other.spec, "field spec mismatch");
        Self {
            spec: self.spec,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Midpoint-rule discrete L2 norm `sqrt(sum f^2 hx hy)`.
pub fn l2_norm(f: &ScalarField) -> f64 {
    let s: f64 = f.data.iter().map(|v| v * v).sum();
    (s * f.spec.cell_area()).sqrt()
}

/// Max-magnitude norm over cells.
pub fn linf_norm(f: &ScalarField) -> f64 {
    f.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// MAC staggered velocity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    spec: GridSpec,
    /// x-normal face values, `(nx+1) x ny`, index `j*(nx+1) + i`.
    ux: Vec<f64>,
    /// y-normal face values, `nx x (ny+1)`, index `j*nx + i`.
    uy: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &Grid) -> Self {
        let spec = grid.spec();
        Self {
            spec,
            ux: vec![0.0; (spec.nx + 1) * spec.ny],
            uy: vec![0.0; spec.nx * (spec.ny + 1)],
        }
    }

    /// Samples `fx(x,y)` at x-faces and `fy(x,y)` at y-faces.
    pub fn from_fn(
        grid: &Grid,
        mut fx: impl FnMut(f64, f64) -> f64,
        mut fy: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        let spec = grid.spec();
        let mut v = Self::zeros(grid);
        for j in 0..spec.ny {
            for i in 0..=spec.nx {
                let x = i as f64 * spec.hx();
                v.set_ux(i, j, fx(x, spec.cell_y(j)));
            }
        }
        for j in 0..=spec.ny {
            for i in 0..spec.nx {
                let y = j as f64 * spec.hy();
                v.set_uy(i, j, fy(spec.cell_x(i), y));
            }
        }
        v
    }

    /// Discrete curl of a stream function sampled at grid nodes:
    /// `ux = d(psi)/dy`, `uy = -d(psi)/dx`. The result is exactly
    /// divergence-free on the MAC grid, and wall-sealed whenever `psi` is
    /// constant along the boundary.
    pub fn from_stream(grid: &Grid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let spec = grid.spec();
        let (hx, hy) = (spec.hx(), spec.hy());
        let node = |i: usize, j: usize| psi(i as f64 * hx, j as f64 * hy);
        let mut v = Self::zeros(grid);
        for j in 0..spec.ny {
            for i in 0..=spec.nx {
                v.set_ux(i, j, (node(i, j + 1) - node(i, j)) / hy);
            }
        }
        for j in 0..=spec.ny {
            for i in 0..spec.nx {
                v.set_uy(i, j, -(node(i + 1, j) - node(i, j)) / hx);
            }
        }
        v
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn ux(&self, i: usize, j: usize) -> f64 {
        self.ux[j * (self.spec.nx + 1) + i]
    }

    #[inline]
    pub fn uy(&self, i: usize, j: usize) -> f64 {
        self.uy[j * self.spec.nx + i]
    }

    #[inline]
    pub fn set_ux(&mut self, i: usize, j: usize, v: f64) {
        self.ux[j * (self.spec.nx + 1) + i] = v;
    }

    #[inline]
    pub fn set_uy(&mut self, i: usize, j: usize, v: f64) {
        self.uy[j * self.spec.nx + i] = v;
    }

    #[inline]
    pub fn ux_values(&self) -> &[f64] {
        &self.ux
    }

    #[inline]
    pub fn uy_values(&self) -> &[f64] {
        &self.uy
    }

    #[inline]
    pub fn ux_values_mut(&mut self) -> &mut [f64] {
        &mut self.ux
    }

    #[inline]
    pub fn uy_values_mut(&mut self) -> &mut [f64] {
        &mut self.uy
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(self.uy.iter()).all(|v| v.is_finite())
    }

    pub fn max_abs_ux(&self) -> f64 {
        self.ux.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_uy(&self) -> f64 {
        self.uy.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn linf(&self) -> f64 {
        self.max_abs_ux().max(self.max_abs_uy())
    }

    /// Zeroes the boundary normal faces (no-penetration walls).
    pub fn zero_boundary_normal(&mut self) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        for j in 0..ny {
            self.set_ux(0, j, 0.0);
            self.set_ux(nx, j, 0.0);
        }
        for i in 0..nx {
            self.set_uy(i, 0, 0.0);
            self.set_uy(i, ny, 0.0);
        }
    }

    /// Cell-centered discrete divergence.
    pub fn divergence(&self) -> ScalarField {
        let s = self.spec;
        let (hx, hy) = (s.hx(), s.hy());
        let mut d = vec![0.0; s.n_cells()];
        for j in 0..s.ny {
            for i in 0..s.nx {
                d[j * s.nx + i] = (self.ux(i + 1, j) - self.ux(i, j)) / hx
                    + (self.uy(i, j + 1) - self.uy(i, j)) / hy;
            }
        }
        ScalarField { spec: s, data: d }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.spec, other.spec, "velocity spec mismatch");
        Self {
            spec: self.spec,
            ux: self.ux.iter().zip(&other.ux).map(|(a, b)| a - b).collect(),
            uy: self.uy.iter().zip(&other.uy).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            spec: self.spec,
            ux: self.ux.iter().map(|v| a * v).collect(),
            uy: self.uy.iter().map(|v| a * v).collect(),
        }
    }
}

/// Face-weighted discrete L2 norm of a velocity field. Each face carries the
/// area of its dual cell, so boundary normal faces get half weight and a
/// constant field over the unit square has norm 1.
pub fn l2_norm_velocity(u: &VelocityField) -> f64 {
    let s = u.spec;
    let a = s.cell_area();
    let mut acc = 0.0;
    for j in 0..s.ny {
        for i in 0..=s.nx {
            let w = if i == 0 || i == s.nx { 0.5 * a } else { a };
            let v = u.ux(i, j);
            acc += w * v * v;
        }
    }
    for j in 0..=s.ny {
        let w = if j == 0 || j == s.ny { 0.5 * a } else { a };
        for i in 0..s.nx {
            let v = u.uy(i, j);
            acc += w * v * v;
        }
    }
    acc.sqrt()
}
