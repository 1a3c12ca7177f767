//! Estimate monitors along a flow run, exponential rate fits, bound verdicts
//! and comparison of terminal states with predicted limit metrics.
//!
//! Every monitor is a sup (or, for the Hamiltonian, an inf) over interior
//! nodes of a pointwise quantity built from the evolving metric g_ψ and the
//! evolving Hamiltonian f_ψ = f + a·u·ψ'.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::flow::{ncma_rhs, FlowState};
use crate::geometry::{self, InvariantMetric};
use crate::io;
use crate::soliton::SolitonData;
use crate::radial::{linear_fit, Profile, RadialGrid, EDGE};

/// Default window of the decay-rate fit.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (2.0, 8.0);
/// A bounded monitor must reach its running maximum before this time.
pub const BOUND_ATTAINED_BY: f64 = 2.0;
/// Relative slack on "attained before". It covers the accumulated
/// time-stepping error, which e^τ-weighted monitors see amplified.
pub const VERDICT_RTOL: f64 = 1e-4;
/// Allowed relative drop of inf f_ψ below its initial value.
pub const HAMILTONIAN_FLOOR_RTOL: f64 = 1e-6;
pub const MIN_FIT_SAMPLES: usize = 8;
/// Monitors skip this many nodes at each end of the grid. The flow replaces
/// the evolution equation by boundary rows on the outermost EDGE nodes, and
/// each chained derivative spreads their influence by another EDGE nodes.
pub const MONITOR_MARGIN: usize = 4 * EDGE;

/// Time dependence of the bound a monitor is expected to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    Constant,
    ExpMinusTau,
    ExpMinusTwoTau,
    /// The monitor is an infimum that must not drop below its initial value.
    NotBelowInitial,
}

impl BoundForm {
    fn time_weight(self, tau: f64) -> f64 {
        match self {
            BoundForm::ExpMinusTau => tau.exp(),
            BoundForm::ExpMinusTwoTau => (2.0 * tau).exp(),
            BoundForm::Constant | BoundForm::NotBelowInitial => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBound {
    pub form: BoundForm,
    /// Power of f_ψ multiplying the pointwise quantity before the sup.
    pub weight_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    SupPsiDot,
    GradPsiDot,
    VectorFieldNorm,
    TracePsiInG,
    TraceGInPsi,
    ChristoffelEnergy,
    CurvatureNorm,
    Obstruction0,
    Obstruction1,
    Obstruction2,
    InfHamiltonian,
    DriftDefect,
}

impl Monitor {
    pub const ALL: [Monitor; 12] = [
        Monitor::SupPsiDot,
        Monitor::GradPsiDot,
        Monitor::VectorFieldNorm,
        Monitor::TracePsiInG,
        Monitor::TraceGInPsi,
        Monitor::ChristoffelEnergy,
        Monitor::CurvatureNorm,
        Monitor::Obstruction0,
        Monitor::Obstruction1,
        Monitor::Obstruction2,
        Monitor::InfHamiltonian,
        Monitor::DriftDefect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Monitor::SupPsiDot => "a_sup_psi_dot",
            Monitor::GradPsiDot => "b_f_grad_psi_dot_sq",
            Monitor::VectorFieldNorm => "c_x_norm_sq_over_f",
            Monitor::TracePsiInG => "d_trace_g_of_g_psi",
            Monitor::TraceGInPsi => "d_trace_g_psi_of_g",
            Monitor::ChristoffelEnergy => "e_f_christoffel_energy",
            Monitor::CurvatureNorm => "f_f_curvature_norm",
            Monitor::Obstruction0 => "g0_obstruction",
            Monitor::Obstruction1 => "g1_obstruction",
            Monitor::Obstruction2 => "g2_obstruction",
            Monitor::InfHamiltonian => "h_inf_f_psi",
            Monitor::DriftDefect => "i_drift_defect",
        }
    }

    pub fn from_name(name: &str) -> Option<Monitor> {
        Monitor::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn predicted_bound(self) -> PredictedBound {
        use BoundForm::*;
        let (form, weight_exponent) = match self {
            Monitor::SupPsiDot => (ExpMinusTau, 0.0),
            Monitor::GradPsiDot => (ExpMinusTwoTau, 1.0),
            Monitor::VectorFieldNorm => (Constant, -1.0),
            Monitor::TracePsiInG | Monitor::TraceGInPsi => (Constant, 0.0),
            Monitor::ChristoffelEnergy | Monitor::CurvatureNorm => (Constant, 1.0),
            Monitor::Obstruction0 => (ExpMinusTau, 1.0),
            Monitor::Obstruction1 => (ExpMinusTau, 1.5),
            Monitor::Obstruction2 => (ExpMinusTau, 2.0),
            Monitor::InfHamiltonian => (NotBelowInitial, 0.0),
            Monitor::DriftDefect => (Constant, 0.0),
        };
        PredictedBound {
            form,
            weight_exponent,
        }
    }

    /// The second covariant derivative of T is dominated by one-sided
    /// stencil noise near the inner boundary; its verdict is reported but
    /// does not decide pass/fail.
    pub fn advisory(self) -> bool {
        self == Monitor::Obstruction2
    }
}

/// Quantities shared by all monitors of one snapshot.
struct Snapshot<'a> {
    state: &'a FlowState,
    metric: InvariantMetric,
    f_psi: Profile,
    a: f64,
    /// Response of ψ̇ to a rounding-level perturbation of the potential.
    jitter: Profile,
}

/// One monitor value with the rounding floor below which it carries no
/// signal (zero when no floor is estimated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorValue {
    pub monitor: Monitor,
    pub value: f64,
    pub floor: f64,
}

/// Relative size, in ulps, of the potential perturbation behind the floors.
const JITTER_ULPS: f64 = 4.0;
/// Floors are this multiple of the jitter response.
const FLOOR_FACTOR: f64 = 10.0;

impl<'a> Snapshot<'a> {
    fn new(state: &'a FlowState) -> Result<Self> {
        let metric = state.metric()?;
        let a = state.soliton.scale.a;
        let f_psi = hamiltonian_of(state)?;
        // Rounding of the stored potential, pushed through the right-hand
        // side, is what limits the ψ̇-based monitors.
        let pot = &state.potential;
        let jittered = jitter(pot)?;
        let jitter = ncma_rhs(&jittered, &state.soliton)?.sub(&ncma_rhs(pot, &state.soliton)?);
        Ok(Snapshot {
            state,
            metric,
            f_psi,
            a,
            jitter,
        })
    }

    fn weighted_sup(&self, q: &Profile, w: f64) -> f64 {
        interior(q)
            .zip(interior(&self.f_psi))
            .map(|(v, f)| v.abs() * f.powf(w))
            .fold(0.0, f64::max)
    }

    /// Monitors built from ψ̇ alone, evaluated on an arbitrary ψ̇.
    fn psi_dot_monitor(&self, m: Monitor, psi_dot: &Profile) -> Result<f64> {
        let w = m.predicted_bound().weight_exponent;
        let g = &self.metric;
        Ok(match m {
            Monitor::SupPsiDot => interior_sup_abs(psi_dot),
            Monitor::GradPsiDot => self.weighted_sup(&geometry::grad_norm_sq(psi_dot, g)?, w),
            Monitor::Obstruction0 | Monitor::Obstruction1 | Monitor::Obstruction2 => {
                let k = match m {
                    Monitor::Obstruction0 => 0,
                    Monitor::Obstruction1 => 1,
                    _ => 2,
                };
                let norms = geometry::ddbar_derivative_norms(psi_dot, g)?;
                self.weighted_sup(&norms[k], w)
            }
            _ => unreachable!("{m:?} does not depend on psi_dot alone"),
        })
    }

    fn eval(&self, m: Monitor) -> Result<MonitorValue> {
        let w = m.predicted_bound().weight_exponent;
        let base = &self.state.soliton.metric;
        let g = &self.metric;
        let (value, floor) = match m {
            Monitor::SupPsiDot | Monitor::Obstruction0 | Monitor::Obstruction1 | Monitor::Obstruction2 => {
                let v = self.psi_dot_monitor(m, &self.state.psi_dot)?;
                (v, FLOOR_FACTOR * self.psi_dot_monitor(m, &self.jitter)?)
            }
            Monitor::GradPsiDot => {
                // |∇(ψ̇ + δ)|² − |∇ψ̇|² ≤ 2|∇ψ̇||∇δ| + |∇δ|².
                let v = self.psi_dot_monitor(m, &self.state.psi_dot)?;
                let d = self.psi_dot_monitor(m, &self.jitter)?;
                (v, FLOOR_FACTOR * (2.0 * (v * d).sqrt() + d))
            }
            Monitor::VectorFieldNorm => {
                // X is the g_ψ-gradient of f_ψ, so f_ψ' = a·lam_rad_ψ and
                // |X|² = 2u·f_ψ'²/lam_rad_ψ = 2a²·u·lam_rad_ψ.
                let x2 = g.lam_rad.map_u(|u, r| 2.0 * self.a * self.a * u * r);
                (self.weighted_sup(&x2, w), 0.0)
            }
            Monitor::TracePsiInG => {
                let tr = geometry::trace_pair(base, &g.lam_perp, &g.lam_rad);
                (self.weighted_sup(&tr, w), 0.0)
            }
            Monitor::TraceGInPsi => {
                let tr = geometry::trace_pair(g, &base.lam_perp, &base.lam_rad);
                (self.weighted_sup(&tr, w), 0.0)
            }
            Monitor::ChristoffelEnergy => (self.weighted_sup(&geometry::christoffel_energy(base, g)?, w), 0.0),
            Monitor::CurvatureNorm => (self.weighted_sup(&geometry::curvature_norm(g)?, w), 0.0),
            Monitor::InfHamiltonian => (interior(&self.f_psi).fold(f64::INFINITY, f64::min), 0.0),
            Monitor::DriftDefect => {
                let psi = self.state.psi();
                let q = psi.derivative(1)?.map_u(|u, d| self.a * u * d).sub(&psi);
                (self.weighted_sup(&q, w), 0.0)
            }
        };
        if value.is_finite() && floor.is_finite() {
            Ok(MonitorValue {
                monitor: m,
                value,
                floor,
            })
        } else {
            Err(LabError::MonitorNaN(m.name().to_string()))
        }
    }
}

fn interior(p: &Profile) -> impl Iterator<Item = f64> + '_ {
    let m = MONITOR_MARGIN;
    p.values()[m..p.len() - m].iter().copied()
}

fn interior_sup_abs(p: &Profile) -> f64 {
    interior(p).fold(0.0, |m, v| m.max(v.abs()))
}

/// f_ψ = f + a·u·ψ'.
pub fn hamiltonian_of(state: &FlowState) -> Result<Profile> {
    let a = state.soliton.scale.a;
    let d1 = state.potential.derivative(1)?;
    Ok(state.soliton.f.add(&d1.map_u(|u, d| a * u * d)))
}

/// Evaluates the requested monitors on one snapshot, in parallel.
pub fn monitor_set(state: &FlowState, which: &[Monitor]) -> Result<Vec<MonitorValue>> {
    if state.potential.len() <= 2 * MONITOR_MARGIN {
        return Err(LabError::InvalidGrid(format!(
            "monitors need more than {} nodes",
            2 * MONITOR_MARGIN
        )));
    }
    let snap = Snapshot::new(state)?;
    which.par_iter().map(|&m| snap.eval(m)).collect()
}

/// All monitors, by name.
pub fn monitor_suite(state: &FlowState) -> Result<Vec<(String, f64)>> {
    Ok(monitor_set(state, &Monitor::ALL)?
        .into_iter()
        .map(|v| (v.monitor.name().to_string(), v.value))
        .collect())
}

/// ∂_τ f_ψ − (Δ_{ω_ψ,X} f_ψ − f_ψ) with ∂_τ f_ψ = a·u·ψ̇'.
fn evolution_defect(potential: &Profile, psi_dot: &Profile, soliton: &SolitonData) -> Result<Profile> {
    let scale = soliton.scale;
    let metric = soliton.metric.perturbed(potential)?;
    let f_psi = soliton
        .f
        .add(&potential.derivative(1)?.map_u(|u, d| scale.a * u * d));
    let dt_f = psi_dot.derivative(1)?.map_u(|u, d| scale.a * u * d);
    let rhs = geometry::drift_laplacian(&f_psi, &metric, scale)?.sub(&f_psi);
    Ok(dt_f.sub(&rhs))
}

/// Interior sup of the Hamiltonian evolution defect, using the right-hand
/// side stored in the state for ∂_τ ψ, and its rounding floor.
pub fn hamiltonian_evolution_residual(state: &FlowState) -> Result<(f64, f64)> {
    let s = &state.soliton;
    let d = evolution_defect(&state.potential, &state.psi_dot, s)?;
    let jittered = jitter(&state.potential)?;
    let dj_dot = ncma_rhs(&jittered, s)?.sub(&ncma_rhs(&state.potential, s)?);
    let dj = evolution_defect(&jittered, &state.psi_dot.add(&dj_dot), s)?;
    let r = interior_sup_abs(&d);
    let floor = FLOOR_FACTOR * interior_sup_abs(&dj.sub(&d));
    if r.is_finite() && floor.is_finite() {
        Ok((r, floor))
    } else {
        Err(LabError::MonitorNaN("hamiltonian_evolution_residual".into()))
    }
}

/// The potential perturbed by a few ulps in a fixed pseudo-random pattern.
fn jitter(pot: &Profile) -> Result<Profile> {
    let values: Vec<f64> = pot
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let h = (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            let r = (h as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0;
            v * (1.0 + JITTER_ULPS * f64::EPSILON * r)
        })
        .collect();
    Profile::new(pot.grid().clone(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub name: String,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Rounding floor of each sample (zero where none is estimated).
    pub floors: Vec<f64>,
    pub predicted_bound: Option<PredictedBound>,
}

impl MonitorSeries {
    pub fn new(name: impl Into<String>, predicted_bound: Option<PredictedBound>) -> Self {
        MonitorSeries {
            name: name.into(),
            taus: Vec::new(),
            values: Vec::new(),
            floors: Vec::new(),
            predicted_bound,
        }
    }

    pub fn from_samples(name: impl Into<String>, samples: &[(f64, f64)]) -> Result<Self> {
        let mut s = MonitorSeries::new(name, None);
        for &(t, v) in samples {
            s.push(t, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, tau: f64, value: f64) -> Result<()> {
        self.push_with_floor(tau, value, 0.0)
    }

    pub fn push_with_floor(&mut self, tau: f64, value: f64, floor: f64) -> Result<()> {
        if !(value.is_finite() && floor.is_finite()) {
            return Err(LabError::MonitorNaN(self.name.clone()));
        }
        if let Some(&last) = self.taus.last() {
            if !(tau > last) {
                return Err(LabError::Domain(format!(
                    "monitor {}: sample times must increase ({tau} after {last})",
                    self.name
                )));
            }
        }
        self.taus.push(tau);
        self.values.push(value);
        self.floors.push(floor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Value at the first sample with tau ≥ `tau`.
    pub fn value_at(&self, tau: f64) -> Option<f64> {
        let i = self.taus.iter().position(|&t| t >= tau - 1e-12)?;
        Some(self.values[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,value,floor\n");
        for ((t, v), f) in self.taus.iter().zip(&self.values).zip(&self.floors) {
            s.push_str(&format!("{t:.16e},{v:.16e},{f:.16e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub amplitude: f64,
    pub rate: f64,
    pub r_squared: f64,
    /// First and last sample time actually used.
    pub window: (f64, f64),
}

/// Least-squares fit of log(value) = log(amplitude) + rate·tau over the
/// samples with tau in `window`.
pub fn fit_rate(series: &MonitorSeries, window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(LabError::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let eps = 1e-12 * hi.abs().max(1.0);
    let picked: Vec<(f64, f64)> = series
        .taus
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| **t >= lo - eps && **t <= hi + eps)
        .map(|(t, v)| (*t, *v))
        .collect();
    if picked.len() < MIN_FIT_SAMPLES {
        return Err(LabError::Fit(format!(
            "monitor {}: {} samples in [{lo}, {hi}], need {MIN_FIT_SAMPLES}",
            series.name,
            picked.len()
        )));
    }
    if let Some((t, v)) = picked.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(LabError::Fit(format!(
            "monitor {}: nonpositive sample {v:e} at tau = {t} (floor reached; shrink the window)",
            series.name
        )));
    }
    let x: Vec<f64> = picked.iter().map(|p| p.0).collect();
    let y: Vec<f64> = picked.iter().map(|p| p.1.ln()).collect();
    let (rate, intercept, r2) = linear_fit(&x, &y);
    Ok(RateFit {
        amplitude: intercept.exp(),
        rate,
        r_squared: r2,
        window: (x[0], x[x.len() - 1]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub monitor: String,
    pub bound_satisfied: bool,
    /// Relative headroom; negative when the bound is violated.
    pub margin: f64,
    pub advisory: bool,
    /// Samples after the transient that were at or below their rounding
    /// floor and therefore carried no information about the bound.
    pub floor_hit_samples: usize,
}

/// Bounded monitors: the time-weighted running max is attained before
/// `BOUND_ATTAINED_BY`, ignoring later samples that sit at their floor. The Hamiltonian infimum: never below its initial
/// value up to `HAMILTONIAN_FLOOR_RTOL`.
pub fn verdict(series: &MonitorSeries) -> Option<Verdict> {
    let bound = series.predicted_bound?;
    if series.is_empty() {
        return None;
    }
    let advisory = Monitor::from_name(&series.name).is_some_and(Monitor::advisory);
    let mut floor_hits = 0;
    let (ok, margin) = match bound.form {
        BoundForm::NotBelowInitial => {
            let v0 = series.values[0];
            let lo = series.values.iter().copied().fold(f64::INFINITY, f64::min);
            let floor = v0 * (1.0 - HAMILTONIAN_FLOOR_RTOL);
            (lo >= floor, (lo - floor) / v0.abs().max(f64::MIN_POSITIVE))
        }
        form => {
            let (mut early, mut late) = (0.0f64, 0.0f64);
            for ((t, v), fl) in series.taus.iter().zip(&series.values).zip(&series.floors) {
                let w = v.abs() * form.time_weight(*t);
                if *t <= BOUND_ATTAINED_BY {
                    early = early.max(w);
                } else if v.abs() > *fl {
                    late = late.max(w);
                } else {
                    floor_hits += 1;
                }
            }
            let cap = early * (1.0 + VERDICT_RTOL);
            let margin = if early > 0.0 {
                (cap - late) / early
            } else if late == 0.0 {
                0.0
            } else {
                -1.0
            };
            (early.is_finite() && late <= cap, margin)
        }
    };
    Some(Verdict {
        monitor: series.name.clone(),
        bound_satisfied: ok,
        margin,
        advisory,
        floor_hit_samples: floor_hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub monitor: String,
    #[serde(flatten)]
    pub fit: Option<RateFit>,
    /// Why the fit could not be made, if it could not.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub monitors: Vec<MonitorSeries>,
    pub fits: Vec<NamedFit>,
    pub verdicts: Vec<Verdict>,
    pub hamiltonian: Option<HamiltonianCheck>,
}

impl DiagnosticsReport {
    pub fn series(&self, name: &str) -> Option<&MonitorSeries> {
        self.monitors.iter().find(|s| s.name == name)
    }

    pub fn verdict_for(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.monitor == name)
    }

    /// True when every non-advisory verdict holds, including the
    /// Hamiltonian evolution check when it was recorded.
    pub fn all_bounds_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.advisory || v.bound_satisfied)
            && self.hamiltonian.as_ref().map_or(true, HamiltonianCheck::satisfied)
    }

    /// Writes `<stem>.json` and one `<stem>_<monitor>.csv` per monitor.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        io::write_json(dir.join(format!("{stem}.json")), self)?;
        for s in &self.monitors {
            io::atomic_write(dir.join(format!("{stem}_{}.csv", s.name)), s.to_csv().as_bytes())?;
        }
        Ok(())
    }
}

/// Evolution identity of f_ψ checked at every sample after the initial one
/// (the initial state is raw data, not produced by a step).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianCheck {
    pub newton_tol: f64,
    pub taus: Vec<f64>,
    pub residuals: Vec<f64>,
    /// 5·newton_tol/dt, plus ten times the background soliton identity
    /// residuals (Δf − R − n and the normalization of f enter the defect
    /// additively), plus the rounding floor.
    pub allowed: Vec<f64>,
}

impl HamiltonianCheck {
    fn push(&mut self, state: &FlowState) -> Result<()> {
        let (r, floor) = hamiltonian_evolution_residual(state)?;
        let res = &state.soliton.residuals;
        let allowed = 5.0 * self.newton_tol / state.dt
            + 10.0 * (res.identity_sup + res.normalization_sup)
            + floor;
        self.taus.push(state.tau);
        self.residuals.push(r);
        self.allowed.push(allowed);
        Ok(())
    }

    pub fn sup_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn satisfied(&self) -> bool {
        self.residuals.iter().zip(&self.allowed).all(|(r, a)| r <= a)
    }
}

/// Collects monitor series from flow snapshots; use it from a run hook.
#[derive(Debug, Clone)]
pub struct Recorder {
    monitors: Vec<Monitor>,
    series: Vec<MonitorSeries>,
    hamiltonian: Option<HamiltonianCheck>,
}

impl Recorder {
    pub fn new(monitors: &[Monitor]) -> Self {
        Recorder {
            monitors: monitors.to_vec(),
            series: monitors
                .iter()
                .map(|m| MonitorSeries::new(m.name(), Some(m.predicted_bound())))
                .collect(),
            hamiltonian: None,
        }
    }

    pub fn all() -> Self {
        Recorder::new(&Monitor::ALL)
    }

    /// Also track the Hamiltonian evolution residual at every sample.
    /// States produced by steps with this Newton tolerance.
    pub fn with_hamiltonian_residual(mut self, newton_tol: f64) -> Self {
        self.hamiltonian = Some(HamiltonianCheck {
            newton_tol,
            ..HamiltonianCheck::default()
        });
        self
    }

    pub fn record(&mut self, state: &FlowState) -> Result<()> {
        if let Some(last) = self.series.first().and_then(|s| s.taus.last()) {
            if state.tau <= *last {
                return Ok(());
            }
        }
        let values = monitor_set(state, &self.monitors)?;
        for (s, v) in self.series.iter_mut().zip(values) {
            s.push_with_floor(state.tau, v.value, v.floor)?;
        }
        let first = self.series.first().map_or(true, |s| s.len() == 1);
        if let (Some(h), false) = (self.hamiltonian.as_mut(), first) {
            h.push(state)?;
        }
        Ok(())
    }

    pub fn series(&self) -> &[MonitorSeries] {
        &self.series
    }

    /// Fits the decay rate of every exponentially bounded monitor over
    /// `window` and judges every bound.
    pub fn finish(self, window: (f64, f64)) -> DiagnosticsReport {
        let fits = self
            .series
            .iter()
            .filter(|s| {
                matches!(
                    s.predicted_bound.map(|b| b.form),
                    Some(BoundForm::ExpMinusTau | BoundForm::ExpMinusTwoTau)
                )
            })
            .map(|s| match fit_rate(s, window) {
                Ok(f) => NamedFit {
                    monitor: s.name.clone(),
                    fit: Some(f),
                    error: None,
                },
                Err(e) => NamedFit {
                    monitor: s.name.clone(),
                    fit: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let verdicts = self.series.iter().filter_map(verdict).collect();
        DiagnosticsReport {
            monitors: self.series,
            fits,
            verdicts,
            hamiltonian: self.hamiltonian,
        }
    }
}

/// |T|_{g_ψ} = |i∂∂̄ψ̇|_{g_ψ} at every node, with its rounding floor.
pub fn obstruction_profile(state: &FlowState) -> Result<(Profile, Profile)> {
    let snap = Snapshot::new(state)?;
    let [t, _, _] = geometry::ddbar_derivative_norms(&state.psi_dot, &snap.metric)?;
    let [d, _, _] = geometry::ddbar_derivative_norms(&snap.jitter, &snap.metric)?;
    Ok((t, d.map(|v| FLOOR_FACTOR * v.abs())))
}

/// Power law |T| ~ f_ψ^slope fitted over an outer window of u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialFit {
    pub slope: f64,
    pub r_squared: f64,
    pub u_window: (f64, f64),
    pub samples: usize,
}

/// Fits log|T| against log f_ψ over the outermost window spanning `decades`
/// of u inside the monitor margin on which |T| stays above its floor.
pub fn obstruction_decay(state: &FlowState, decades: f64) -> Result<SpatialFit> {
    let (t, floor) = obstruction_profile(state)?;
    let f_psi = hamiltonian_of(state)?;
    let g = state.potential.grid();
    let n = g.len();
    if n <= 2 * MONITOR_MARGIN {
        return Err(LabError::Fit(format!("grid of {n} nodes is inside the monitor margin")));
    }
    let clean = |i: usize| t.at(i) > floor.at(i) && t.at(i) > 0.0;
    let lo_limit = MONITOR_MARGIN;
    let ratio = 10f64.powf(decades);
    for hi in (lo_limit..n - MONITOR_MARGIN).rev() {
        if !clean(hi) {
            continue;
        }
        let u_lo = g.u(hi) / ratio;
        if u_lo < g.u(lo_limit) {
            break;
        }
        let lo = g.nodes().partition_point(|&u| u < u_lo);
        if (lo..=hi).all(clean) {
            let x: Vec<f64> = (lo..=hi).map(|i| f_psi.at(i).ln()).collect();
            let y: Vec<f64> = (lo..=hi).map(|i| t.at(i).ln()).collect();
            if x.len() < MIN_FIT_SAMPLES {
                break;
            }
            let (slope, _, r_squared) = linear_fit(&x, &y);
            return Ok(SpatialFit {
                slope,
                r_squared,
                u_window: (g.u(lo), g.u(hi)),
                samples: x.len(),
            });
        }
    }
    Err(LabError::Fit(format!(
        "no window of {decades} decades with |T| above its rounding floor"
    )))
}

/// Differences between a terminal metric and a predicted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitComparison {
    /// per_k[0].
    pub sup_diff_weighted: f64,
    /// sup f^{1+k/2}·|∇^k(g_ψ − g_pred)|_{g_pred} for k = 0, 1, 2.
    pub per_k: Vec<f64>,
    /// sup over the window of the relative eigenvalue differences.
    pub sup_rel_eigen: f64,
    pub window: (f64, f64),
    /// Fraction of the terminal grid on which the prediction is available.
    pub coverage: f64,
}

/// Indices of `sub`'s nodes in `full`, which must contain them.
fn node_indices(full: &RadialGrid, sub: &RadialGrid) -> Option<Vec<usize>> {
    let nodes = full.nodes();
    sub.nodes()
        .iter()
        .map(|&u| {
            let i = nodes.partition_point(|&v| v < u * (1.0 - 1e-13));
            (i < nodes.len() && (nodes[i] - u).abs() <= 1e-13 * u).then_some(i)
        })
        .collect()
}

/// Compares the terminal metric g_ψ with `predicted`, whose grid must be a
/// run of consecutive nodes of the terminal grid (as produced by pullbacks).
/// Weights use the background Hamiltonian f. `window` restricts the
/// relative eigenvalue comparison; `None` means all interior nodes.
pub fn compare_to_limit(
    terminal: &FlowState,
    predicted: &InvariantMetric,
    window: Option<(f64, f64)>,
) -> Result<LimitComparison> {
    let g = terminal.metric()?;
    let full = g.p.grid();
    let sub = predicted.p.grid().clone();
    let idx = node_indices(full, &sub).ok_or_else(|| {
        LabError::GridMismatch("predicted metric is not sampled on nodes of the terminal grid".into())
    })?;
    let restrict = |p: &Profile| Profile::new(sub.clone(), idx.iter().map(|&i| p.at(i)).collect());
    let d_perp = restrict(&g.lam_perp)?.sub(&predicted.lam_perp);
    let d_rad = restrict(&g.lam_rad)?.sub(&predicted.lam_rad);
    let f = restrict(&terminal.soliton.f)?;
    let norms = geometry::form_derivative_norms(&d_perp, &d_rad, predicted)?;
    let per_k: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(k, nk)| {
            let w = 1.0 + k as f64 / 2.0;
            (MONITOR_MARGIN..sub.len() - MONITOR_MARGIN)
                .map(|i| nk.at(i).abs() * f.at(i).abs().powf(w))
                .fold(0.0, f64::max)
        })
        .collect();
    let (lo, hi) = window.unwrap_or((sub.u(MONITOR_MARGIN), sub.u(sub.len() - 1 - MONITOR_MARGIN)));
    let mut rel: f64 = 0.0;
    let mut any = false;
    for i in MONITOR_MARGIN..sub.len() - MONITOR_MARGIN {
        let u = sub.u(i);
        if u < lo || u > hi {
            continue;
        }
        any = true;
        rel = rel
            .max((d_perp.at(i) / predicted.lam_perp.at(i)).abs())
            .max((d_rad.at(i) / predicted.lam_rad.at(i)).abs());
    }
    if !any {
        return Err(LabError::Range {
            lo,
            hi,
            src_lo: sub.u_min(),
            src_hi: sub.u_max(),
        });
    }
    if per_k.iter().any(|v| !v.is_finite()) || !rel.is_finite() {
        return Err(LabError::MonitorNaN("compare_to_limit".into()));
    }
    Ok(LimitComparison {
        sup_diff_weighted: per_k[0],
        per_k,
        sup_rel_eigen: rel,
        window: (lo, hi),
        coverage: sub.len() as f64 / full.len() as f64,
    })
}

/// As `compare_to_limit`, with the prediction given as a potential on (a run
/// of nodes of) the terminal grid.
pub fn compare_to_potential(
    terminal: &FlowState,
    predicted_p: &Profile,
    window: Option<(f64, f64)>,
) -> Result<LimitComparison> {
    let m = geometry::metric_eigenvalues(predicted_p, terminal.soliton.n())?;
    compare_to_limit(terminal, &m, window)
}
