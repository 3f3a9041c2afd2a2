//! Quantitative monitors: boundary classification, Lyapunov energy, decay
//! rate fitting, the asymptotic sup-norm monitor, and per-step diagnostics
//! records with CSV streaming.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::elliptic;
use crate::error::{Error, Result};
use crate::grid::{
    BoundaryData, BoundaryTrace, boundary_tangential_integral, l2_norm, l2_norm_velocity,
    linf_norm,
};
use crate::simulation::State;
use crate::steady::SteadyState;

/// Per-step scalar diagnostics. `e_energy` is the Lyapunov energy
/// `||c1 - c1*||^2 + ||c2 - c2*||^2 + ||u - u*||` (velocity term unsquared);
/// `e_energy_sq` is the all-squared variant logged alongside it. Both are NaN
/// when the run has no reference state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_energy: f64,
    pub l2_c1: f64,
    pub l2_c2: f64,
    pub l2_u: f64,
    pub linf_c1: f64,
    pub linf_c2: f64,
    pub min_c: f64,
    pub div_u: f64,
    pub mass_c1: f64,
    pub mass_c2: f64,
    pub e_energy_sq: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,e_energy,l2_c1,l2_c2,l2_u,linf_c1,linf_c2,min_c,div_u,mass_c1,mass_c2,e_energy_sq";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.e_energy,
            self.l2_c1,
            self.l2_c2,
            self.l2_u,
            self.linf_c1,
            self.linf_c2,
            self.min_c,
            self.div_u,
            self.mass_c1,
            self.mass_c2,
            self.e_energy_sq
        )
    }
}

/// Builds a record from a state, with the energy terms filled in when a
/// reference steady state is available.
pub fn record_from_state(state: &State, reference: Option<&SteadyState>) -> DiagnosticsRecord {
    let (e, esq) = match reference {
        Some(r) => (energy(state, r), energy_squared_velocity(state, r)),
        None => (f64::NAN, f64::NAN),
    };
    DiagnosticsRecord {
        t: state.t,
        e_energy: e,
        l2_c1: l2_norm(&state.c1),
        l2_c2: l2_norm(&state.c2),
        l2_u: l2_norm_velocity(&state.u),
        linf_c1: linf_norm(&state.c1),
        linf_c2: linf_norm(&state.c2),
        min_c: state.min_concentration(),
        div_u: l2_norm(&state.u.divergence()),
        mass_c1: state.c1.mass(),
        mass_c2: state.c2.mass(),
        e_energy_sq: esq,
    }
}

/// Receives diagnostics records as a run produces them.
pub trait DiagnosticsSink {
    fn append(&mut self, rec: &DiagnosticsRecord) -> Result<()>;
}

/// Discards every record.
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn append(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
}

/// Streams records as CSV rows to any writer, emitting the header first.
pub struct CsvSink<W: Write> {
    out: W,
    wrote_header: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        Self { out, wrote_header: false }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> DiagnosticsSink for CsvSink<W> {
    fn append(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        if !self.wrote_header {
            writeln!(self.out, "{}", DiagnosticsRecord::CSV_HEADER)?;
            self.wrote_header = true;
        }
        writeln!(self.out, "{}", rec.csv_row())?;
        Ok(())
    }
}

/// Lyapunov energy in the mixed form: squared concentration terms plus the
/// unsquared velocity term.
pub fn energy(state: &State, reference: &SteadyState) -> f64 {
    let dc1 = l2_norm(&state.c1.sub(&reference.c1));
    let dc2 = l2_norm(&state.c2.sub(&reference.c2));
    let du = l2_norm_velocity(&state.u.sub(&reference.u));
    dc1 * dc1 + dc2 * dc2 + du
}

/// All-squared energy variant, logged alongside the mixed form for
/// sensitivity comparison.
pub fn energy_squared_velocity(state: &State, reference: &SteadyState) -> f64 {
    let dc1 = l2_norm(&state.c1.sub(&reference.c1));
    let dc2 = l2_norm(&state.c2.sub(&reference.c2));
    let du = l2_norm_velocity(&state.u.sub(&reference.u));
    dc1 * dc1 + dc2 * dc2 + du * du
}

/// How a boundary dataset relates to the equilibrium/nonequilibrium split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryLabel {
    /// Both electrochemical potentials constant along the boundary.
    Equilibrium,
    /// Out of equilibrium but with vanishing flow-criterion integrals.
    Nonequilibrium,
    /// Out of equilibrium with a nonzero flow criterion: the steady state
    /// carries flow.
    NonequilibriumNonzeroFlow,
}

/// Scalar summary of a Dirichlet boundary dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryClassification {
    /// `max(||gamma1||_inf, ||gamma2||_inf)` over the boundary.
    pub a_gamma: f64,
    /// Sup norm of the gradient of the harmonic extension of `W`.
    pub grad_w_tilde_linf: f64,
    /// `||gamma1||_inf + ||gamma2||_inf + ||grad Wtilde||_inf`.
    pub smallness: f64,
    /// Loop integral of `(gamma1 - gamma2)` against the tangential
    /// derivative of `W`.
    pub criterion_1: f64,
    /// Loop integral of `W` against the tangential derivative of
    /// `(gamma1 - gamma2)`; equals `-criterion_1` up to quadrature roundoff.
    pub criterion_2: f64,
    pub mu1_span: f64,
    pub mu2_span: f64,
    /// Magnitudes below this are treated as quadrature noise when labeling.
    pub noise_threshold: f64,
    pub label: BoundaryLabel,
}

/// Classifies Dirichlet boundary data. `tol` bounds the electrochemical
/// potential spans accepted as equilibrium. The nonzero-flow threshold
/// defaults to ten times the measured antisymmetry defect of the two
/// criterion integrals (plus a machine-level floor); pass `noise_override`
/// to replace it.
pub fn classify_boundary(bd: &BoundaryData, tol: f64) -> Result<BoundaryClassification> {
    classify_boundary_with_threshold(bd, tol, None)
}

pub fn classify_boundary_with_threshold(
    bd: &BoundaryData,
    tol: f64,
    noise_override: Option<f64>,
) -> Result<BoundaryClassification> {
    if !bd.all_dirichlet() {
        return Err(Error::InvalidBoundary(vec![
            "classification requires Dirichlet data on all sides".into(),
        ]));
    }
    bd.validate()?;
    let g1 = bd.gamma1_loop();
    let g2 = bd.gamma2_loop();
    let w = bd.w_loop();
    let diff = BoundaryTrace::new(
        g1.values.iter().zip(&g2.values).map(|(a, b)| a - b).collect(),
    );
    let criterion_1 = boundary_tangential_integral(&diff, &w)?;
    let criterion_2 = boundary_tangential_integral(&w, &diff)?;

    let sup = |t: &BoundaryTrace| t.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let a_gamma = sup(&g1).max(sup(&g2));

    let wt = elliptic::harmonic_extension(bd, 1e-10)?;
    let gw = elliptic::grad(&wt);
    let grad_w_tilde_linf = gw.linf();
    let smallness = sup(&g1) + sup(&g2) + grad_w_tilde_linf;

    let span = |vals: Vec<f64>| -> f64 {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mu1_span = span(
        g1.values.iter().zip(&w.values).map(|(g, w)| g.ln() + w).collect(),
    );
    let mu2_span = span(
        g2.values.iter().zip(&w.values).map(|(g, w)| g.ln() - w).collect(),
    );

    let defect = (criterion_1 + criterion_2).abs();
    let scale = (1.0 + a_gamma) * (1.0 + sup(&w));
    let noise_threshold =
        noise_override.unwrap_or_else(|| 10.0 * defect + 1e-13 * scale);

    let label = if mu1_span <= tol && mu2_span <= tol {
        BoundaryLabel::Equilibrium
    } else if criterion_1.abs().max(criterion_2.abs()) > noise_threshold {
        BoundaryLabel::NonequilibriumNonzeroFlow
    } else {
        BoundaryLabel::Nonequilibrium
    };

    Ok(BoundaryClassification {
        a_gamma,
        grad_w_tilde_linf,
        smallness,
        criterion_1,
        criterion_2,
        mu1_span,
        mu2_span,
        noise_threshold,
        label,
    })
}

/// Result of a log-linear decay fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted decay rate (`-slope` of `log e` vs `t`); meaningful when
    /// `decaying` is set.
    pub rate: f64,
    /// First time of the fitted window; empirical onset of the decay regime.
    pub t_onset: f64,
    pub r_squared: f64,
    /// False when the series never enters a decaying window.
    pub decaying: bool,
}

/// Least-squares slope of `log e` against `t` over the trailing window where
/// `log e` lies within `[log(e_final) + 2, log(e_initial) - 1]`, which trims
/// both the initial transient and the floor-saturated tail.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs at least 10 positive samples, got {}",
            pts.len()
        )));
    }
    let lo = pts.last().unwrap().1 + 2.0;
    let hi = pts.first().unwrap().1 - 1.0;
    let ok: Vec<usize> = (0..pts.len())
        .filter(|&k| pts[k].1 >= lo && pts[k].1 <= hi)
        .collect();
    let not_decaying = DecayFit {
        rate: 0.0,
        t_onset: pts.first().unwrap().0,
        r_squared: 0.0,
        decaying: false,
    };
    if ok.len() < 2 {
        return Ok(not_decaying);
    }
    // trailing contiguous block
    let end = *ok.last().unwrap();
    let mut start = end;
    let set: std::collections::HashSet<usize> = ok.into_iter().collect();
    while start > 0 && set.contains(&(start - 1)) {
        start -= 1;
    }
    let window = &pts[start..=end];
    if window.len() < 2 {
        return Ok(not_decaying);
    }
    let n = window.len() as f64;
    let st: f64 = window.iter().map(|p| p.0).sum();
    let sl: f64 = window.iter().map(|p| p.1).sum();
    let stt: f64 = window.iter().map(|p| p.0 * p.0).sum();
    let stl: f64 = window.iter().map(|p| p.0 * p.1).sum();
    let denom = n * stt - st * st;
    if denom <= 0.0 {
        return Ok(not_decaying);
    }
    let slope = (n * stl - st * sl) / denom;
    let intercept = (sl - slope * st) / n;
    let mean_l = sl / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, l) in window {
        let pred = slope * t + intercept;
        ss_res += (l - pred) * (l - pred);
        ss_tot += (l - mean_l) * (l - mean_l);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let rate = -slope;
    let t_onset = window[0].0;
    Ok(DecayFit { rate, t_onset, r_squared, decaying: rate > 0.0 })
}

/// First time after which `linf_c1 + linf_c2 <= a_gamma + alpha` holds for
/// every subsequent record, or `None` if the bound is still violated at the
/// end of the history.
pub fn asymptotic_linf_monitor(
    history: &[DiagnosticsRecord],
    a_gamma: f64,
    alpha: f64,
) -> Option<f64> {
    let bound = a_gamma + alpha;
    let mut last_violation: Option<usize> = None;
    for (k, rec) in history.iter().enumerate() {
        if rec.linf_c1 + rec.linf_c2 > bound {
            last_violation = Some(k);
        }
    }
    match last_violation {
        None => history.first().map(|r| r.t),
        Some(k) if k + 1 < history.len() => Some(history[k + 1].t),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        BoundaryMode, Grid, GridSpec, Params, ScalarField, Side, VelocityField, build_grid,
    };
    use crate::steady::SteadyMethod;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        build_grid(GridSpec::unit_square(n)).unwrap()
    }

    fn steady_of(state: &State) -> SteadyState {
        SteadyState {
            c1: state.c1.clone(),
            c2: state.c2.clone(),
            phi: state.phi.clone(),
            u: state.u.clone(),
            p: state.p.clone(),
            residual: 0.0,
            method: SteadyMethod::PoissonBoltzmann,
        }
    }

    fn plain_state(g: &Grid, c1: ScalarField, c2: ScalarField, u: VelocityField) -> State {
        State {
            t: 0.0,
            c1,
            c2,
            phi: ScalarField::zeros(g),
            u,
            p: ScalarField::zeros(g),
        }
    }

    #[test]
    fn classify_uniform_data_as_equilibrium() {
        let g = grid(16);
        let bd = BoundaryData::uniform(&g, BoundaryMode::Dirichlet, 1.0, 1.0, 0.0).unwrap();
        let c = classify_boundary(&bd, 1e-12).unwrap();
        assert_eq!(c.label, BoundaryLabel::Equilibrium);
        assert_eq!(c.criterion_1, 0.0);
        assert_eq!(c.mu1_span, 0.0);
        assert!((c.a_gamma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_label_takes_precedence_over_criteria() {
        // gamma1 = exp(-W), gamma2 = exp(W): mu spans vanish identically even
        // though the criterion integrals need not
        let g = grid(32);
        let w = |x: f64, y: f64| 0.3 * (2.0 * PI * x).sin() * (1.0 - y) + 0.1 * y;
        let bd = BoundaryData::sample(
            &g,
            BoundaryMode::Dirichlet,
            |_, x, y| (-w(x, y)).exp(),
            |_, x, y| w(x, y).exp(),
            |_, x, y| w(x, y),
        )
        .unwrap();
        let c = classify_boundary(&bd, 1e-10).unwrap();
        assert!(c.mu1_span < 1e-12 && c.mu2_span < 1e-12);
        assert_eq!(c.label, BoundaryLabel::Equilibrium);
    }

    #[test]
    fn classify_analytic_criterion_dataset() {
        let g = grid(128);
        let bd = BoundaryData::sample(
            &g,
            BoundaryMode::Dirichlet,
            |s, x, _| {
                2.0 + if s == Side::Bottom { (2.0 * PI * x).sin() } else { 0.0 }
            },
            |_, _, _| 2.0,
            |s, x, _| if s == Side::Bottom { (2.0 * PI * x).cos() } else { 0.0 },
        )
        .unwrap();
        let c = classify_boundary(&bd, 1e-10).unwrap();
        assert!(
            (c.criterion_1 + PI).abs() < 0.02 * PI,
            "criterion_1 = {}",
            c.criterion_1
        );
        assert!((c.criterion_1 + c.criterion_2).abs() < 1e-12);
        assert_eq!(c.label, BoundaryLabel::NonequilibriumNonzeroFlow);
    }

    #[test]
    fn criteria_scale_linearly_in_w() {
        let g = grid(24);
        let build = |s: f64| {
            BoundaryData::sample(
                &g,
                BoundaryMode::Dirichlet,
                |_, x, _| 1.5 + 0.5 * (2.0 * PI * x).sin(),
                |_, _, _| 1.0,
                move |_, x, y| s * ((2.0 * PI * x).cos() + 0.3 * y),
            )
            .unwrap()
        };
        let c1 = classify_boundary(&build(1.0), 1e-10).unwrap();
        let c3 = classify_boundary(&build(3.0), 1e-10).unwrap();
        assert!(
            (c3.criterion_1 - 3.0 * c1.criterion_1).abs() < 1e-12 * c1.criterion_1.abs().max(1.0)
        );
    }

    #[test]
    fn energy_examples() {
        let g = grid(8);
        let c = ScalarField::constant(&g, 1.0);
        let st = plain_state(&g, c.clone(), c.clone(), VelocityField::zeros(&g));
        let reference = steady_of(&st);
        assert_eq!(energy(&st, &reference), 0.0);
        // c1 shifted by one everywhere on the unit square: energy = 1
        let shifted = plain_state(
            &g,
            ScalarField::constant(&g, 2.0),
            c.clone(),
            VelocityField::zeros(&g),
        );
        assert!((energy(&shifted, &reference) - 1.0).abs() < 1e-13);
        // independent recomputation from norms
        let u = VelocityField::from_stream(&g, |x, y| 0.1 * x * y * (1.0 - x) * (1.0 - y));
        let moving = plain_state(&g, ScalarField::constant(&g, 1.5), c, u.clone());
        let e = energy(&moving, &reference);
        let by_parts = {
            let dc1 = crate::grid::l2_norm(&moving.c1.sub(&reference.c1));
            let du = crate::grid::l2_norm_velocity(&u);
            dc1 * dc1 + du
        };
        assert!((e - by_parts).abs() < 1e-12);
        assert!(e >= 0.0);
    }

    #[test]
    fn fit_pure_exponential() {
        let series: Vec<(f64, f64)> =
            (0..=30).map(|k| (0.1 * k as f64, (-2.0 * 0.1 * k as f64).exp())).collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!(fit.decaying);
        assert!((fit.rate - 2.0).abs() < 1e-6, "rate {}", fit.rate);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn fit_with_floor() {
        let series: Vec<(f64, f64)> = (0..=240)
            .map(|k| {
                let t = 0.5 * k as f64;
                (t, 5.0 * (-0.3 * t).exp() + 1e-14)
            })
            .collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!(fit.decaying);
        assert!((fit.rate - 0.3).abs() < 0.003, "rate {}", fit.rate);
    }

    #[test]
    fn fit_constant_series_flagged() {
        let series: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 2.0)).collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!(!fit.decaying);
        assert_eq!(fit.rate, 0.0);
    }

    #[test]
    fn fit_requires_enough_samples() {
        let series: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(fit_decay_rate(&series), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_invariant_under_positive_scaling() {
        let series: Vec<(f64, f64)> = (0..=40)
            .map(|k| {
                let t = 0.05 * k as f64;
                (t, (-1.3 * t).exp() * (1.0 + 0.01 * (20.0 * t).sin()))
            })
            .collect();
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, e)| (t, 17.0 * e)).collect();
        let a = fit_decay_rate(&series).unwrap();
        let b = fit_decay_rate(&scaled).unwrap();
        assert!((a.rate - b.rate).abs() < 1e-9);
    }

    fn rec(t: f64, linf1: f64, linf2: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            e_energy: f64::NAN,
            l2_c1: 0.0,
            l2_c2: 0.0,
            l2_u: 0.0,
            linf_c1: linf1,
            linf_c2: linf2,
            min_c: 0.0,
            div_u: 0.0,
            mass_c1: 0.0,
            mass_c2: 0.0,
            e_energy_sq: f64::NAN,
        }
    }

    #[test]
    fn monitor_already_below() {
        let h: Vec<_> = (0..10).map(|k| rec(k as f64, 0.4, 0.4)).collect();
        assert_eq!(asymptotic_linf_monitor(&h, 1.0, 0.05), Some(0.0));
    }

    #[test]
    fn monitor_crossing() {
        // monotone decreasing sum, crossing the bound 1.05 just before t = 1.5
        let h: Vec<_> = (0..=30)
            .map(|k| {
                let t = k as f64 / 10.0;
                let s = 2.0 * ((1.05_f64 / 2.0).ln() * t / 1.49).exp();
                rec(t, s / 2.0, s / 2.0)
            })
            .collect();
        let t_alpha = asymptotic_linf_monitor(&h, 1.0, 0.05).unwrap();
        assert_eq!(t_alpha, 1.5, "first sample at or after the crossing");
        let idx = h.iter().position(|r| r.t == t_alpha).unwrap();
        assert!(h[idx..].iter().all(|r| r.linf_c1 + r.linf_c2 <= 1.05));
        assert!(h[idx - 1].linf_c1 + h[idx - 1].linf_c2 > 1.05);
    }

    #[test]
    fn monitor_never_attained() {
        let h: Vec<_> = (0..10).map(|k| rec(k as f64, 1.0, 1.0)).collect();
        assert_eq!(asymptotic_linf_monitor(&h, 1.0, 0.05), None);
    }

    #[test]
    fn csv_sink_layout() {
        let g = grid(8);
        let c = ScalarField::constant(&g, 1.0);
        let st = plain_state(&g, c.clone(), c, VelocityField::zeros(&g));
        let rec = record_from_state(&st, None);
        let mut sink = CsvSink::new(Vec::<u8>::new());
        sink.append(&rec).unwrap();
        sink.append(&rec).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), DiagnosticsRecord::CSV_HEADER);
        assert_eq!(lines.count(), 2);
        let _ = Params::default();
    }
}
