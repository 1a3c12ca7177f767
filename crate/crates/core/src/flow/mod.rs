//! Normalized Kähler–Ricci flow of U(n)-invariant perturbations, reduced to the
//! scalar equation
//!
//! ∂ψ/∂τ = log(ω_ψⁿ/ωⁿ) + a·u·ψ′ − ψ,
//!
//! integrated by backward Euler with Newton iterations, step doubling and
//! Richardson extrapolation.

pub mod banded;
mod pullback;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::InvariantMetric;
use crate::io::write_json;
use crate::radial::stencil::{fornberg, WIDTH};
use crate::radial::{Profile, RadialGrid, EDGE};
use crate::soliton::SolitonData;

use banded::BandMatrix;
pub use pullback::{pullback_metric, self_similar_pullback, Pullback, PullbackMetric};

/// Runs stop early once sup|ψ̇| over interior nodes drops below this.
pub const CONVERGED_PSI_DOT: f64 = 1e-10;

const BAND: usize = WIDTH - 1;
const MAX_BACKTRACK: usize = 12;
const GROWTH_MAX: f64 = 5.0;
const SHRINK_MIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub safety: f64,
    /// Bound on sup|ψ_half − ψ_full| per step.
    pub local_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt_init: 1e-3,
            dt_min: 1e-9,
            dt_max: 0.25,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            safety: 0.9,
            local_tol: 1e-7,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.dt_max.is_finite()
            && self.newton_tol > 0.0
            && self.newton_max_iter > 0
            && self.safety > 0.0
            && self.safety < 1.0
            && self.local_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(LabError::Config(format!("invalid step control {self:?}")))
        }
    }
}

/// ψ at time τ together with the right-hand side evaluated there.
///
/// ψ is held as `potential + gauge` with the scalar gauge chosen so that the
/// potential vanishes at the first node. The constant part of ψ drifts
/// (it is not seen by the metric), and keeping it out of the profile spares
/// the derivative stencils the rounding of an O(1) offset.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub tau: f64,
    pub potential: Profile,
    pub gauge: f64,
    pub psi_dot: Profile,
    pub soliton: Arc<SolitonData>,
    pub step_count: usize,
    /// Step size the controller proposes next.
    pub dt: f64,
    pub last_newton_iters: usize,
}

impl FlowState {
    pub fn new(soliton: Arc<SolitonData>, psi0: Profile, ctl: &StepControl) -> Result<Self> {
        ctl.validate()?;
        let psi_dot = ncma_rhs(&psi0, &soliton)?;
        let (potential, gauge) = regauge(psi0, 0.0);
        Ok(FlowState {
            tau: 0.0,
            potential,
            gauge,
            psi_dot,
            soliton,
            step_count: 0,
            dt: ctl.dt_init,
            last_newton_iters: 0,
        })
    }

    /// ψ itself.
    pub fn psi(&self) -> Profile {
        let c = self.gauge;
        self.potential.map(|v| v + c)
    }

    /// The evolving metric g + i∂∂̄ψ.
    pub fn metric(&self) -> Result<InvariantMetric> {
        self.soliton.metric.perturbed(&self.potential)
    }

    /// sup|ψ̇| over interior nodes.
    pub fn sup_psi_dot(&self) -> f64 {
        self.psi_dot.interior_sup_abs()
    }

    /// ψ as CSV plus a JSON sidecar with τ, dt, Newton iterations and sup|ψ̇|.
    pub fn write_checkpoint(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        self.psi().write_csv(dir.join(format!("{stem}.csv")))?;
        write_json(
            dir.join(format!("{stem}.json")),
            &Checkpoint {
                tau: self.tau,
                dt: self.dt,
                newton_iters: self.last_newton_iters,
                sup_psi_dot: self.sup_psi_dot(),
            },
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tau: f64,
    pub dt: f64,
    pub newton_iters: usize,
    pub sup_psi_dot: f64,
}

struct Linearization {
    rhs: Vec<f64>,
    /// Coefficients of ψ′ and ψ″ in the linearized operator.
    c1: Vec<f64>,
    c2: Vec<f64>,
}

/// Linearization at ψ = psi + gauge.
fn linearize(psi: &Profile, gauge: f64, soliton: &SolitonData) -> Result<Linearization> {
    soliton.f.ensure_same_grid(psi)?;
    psi.check_finite()?;
    let g = psi.grid();
    let m = &soliton.metric;
    let k = (m.n - 1) as f64;
    let a = soliton.scale.a;
    let d1 = psi.derivative(1)?;
    let d2 = psi.derivative(2)?;
    let n = psi.len();
    let mut rhs = Vec::with_capacity(n);
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    for i in 0..n {
        let u = g.u(i);
        let (lp, lr) = (m.lam_perp.at(i), m.lam_rad.at(i));
        let dp = d1.at(i);
        let dr = dp + u * d2.at(i);
        let (lpp, lrp) = (lp + dp, lr + dr);
        if !(lpp > 0.0) || !(lrp > 0.0) {
            let (component, value) = if !(lpp > 0.0) {
                ("perpendicular", lpp)
            } else {
                ("radial", lrp)
            };
            return Err(LabError::Positivity {
                component,
                node: i,
                u,
                value,
            });
        }
        rhs.push(k * (dp / lp).ln_1p() + (dr / lr).ln_1p() + a * u * dp - psi.at(i) - gauge);
        c1.push(k / lpp + 1.0 / lrp + a * u);
        c2.push(u / lrp);
    }
    Ok(Linearization { rhs, c1, c2 })
}

fn gauged_rhs(potential: &Profile, gauge: f64, soliton: &SolitonData) -> Result<Profile> {
    let lin = linearize(potential, gauge, soliton)?;
    Profile::new(potential.grid().clone(), lin.rhs)
}

/// Moves the value at the first node into the scalar gauge.
fn regauge(potential: Profile, gauge: f64) -> (Profile, f64) {
    let m = potential.at(0);
    (potential.map(|v| v - m), gauge + m)
}

/// Right-hand side of the normalized Monge–Ampère flow at ψ.
pub fn ncma_rhs(psi: &Profile, soliton: &SolitonData) -> Result<Profile> {
    let lin = linearize(psi, 0.0, soliton)?;
    Profile::new(psi.grid().clone(), lin.rhs)
}

/// Scales a row to unit l1 norm, so its residual is measured in units of ψ.
fn normalized(mut w: [f64; WIDTH]) -> [f64; WIDTH] {
    let s: f64 = w.iter().map(|v| v.abs()).sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Algebraic rows replacing the evolution equation at the ends of the grid.
///
/// Inner end (node 0): ψ‴ = 0. Regular data is smooth in u, while the
/// singular solutions of the elliptic part behave like u^(1−n); the third
/// derivative separates the two by a factor u_min⁻³, which pins down the
/// otherwise nearly free singular mode.
///
/// Outer end (last EDGE nodes): ψ′ keeps its value from the previous step.
/// The drift carries data inward from u_max, and the asymptotic slope of ψ is
/// conserved by the flow, so this fixes the cone of the limit metric while
/// leaving the additive level of ψ free.
struct BoundaryRows {
    /// (node, first stencil column, weights, relative to the previous step)
    rows: Vec<(usize, usize, [f64; WIDTH], bool)>,
}

impl BoundaryRows {
    fn new(grid: &RadialGrid) -> Self {
        let n = grid.len();
        let st = grid.stencils();
        let w3 = fornberg(grid.u(0), &grid.nodes()[..WIDTH], 3);
        let mut inner = [0.0; WIDTH];
        inner.copy_from_slice(&w3[3]);
        let mut rows = vec![(0, 0, normalized(inner), false)];
        for i in n - EDGE..n {
            let (lo, w1) = st.row(1, i);
            rows.push((i, lo, normalized(*w1), true));
        }
        BoundaryRows { rows }
    }

    fn is_boundary(&self, n: usize, i: usize) -> bool {
        i == 0 || i >= n - EDGE
    }

    /// Row residuals, evaluated on differences v_j − v_i (the weights sum to
    /// zero).
    fn residuals<'a>(
        &'a self,
        psi: &'a Profile,
        prev: &'a Profile,
    ) -> impl Iterator<Item = (usize, f64)> + 'a {
        let (v, p) = (psi.values(), prev.values());
        self.rows.iter().map(move |(i, lo, w, relative)| {
            let mut s = 0.0;
            for j in 0..WIDTH {
                s += w[j] * (v[lo + j] - v[*i]);
                if *relative {
                    s -= w[j] * (p[lo + j] - p[*i]);
                }
            }
            (*i, s)
        })
    }
}

enum SolveFailure {
    Diverged(String),
    Fatal(LabError),
}

/// One backward-Euler step of size dt from `prev`, starting Newton at `guess`.
fn backward_euler(
    prev: &Profile,
    guess: Profile,
    gauge: f64,
    dt: f64,
    soliton: &SolitonData,
    ctl: &StepControl,
) -> std::result::Result<(Profile, usize), SolveFailure> {
    let g = prev.grid().clone();
    let n = g.len();
    let st = g.stencils();
    let bc = BoundaryRows::new(&g);
    let mut psi = guess;
    let mut lin = match linearize(&psi, gauge, soliton) {
        Ok(l) => l,
        Err(LabError::Positivity { .. }) => {
            psi = prev.clone();
            linearize(&psi, gauge, soliton).map_err(SolveFailure::Fatal)?
        }
        Err(e) => return Err(SolveFailure::Fatal(e)),
    };
    let residual = |psi: &Profile, lin: &Linearization| -> Vec<f64> {
        let mut r: Vec<f64> = (0..n)
            .map(|i| psi.at(i) - prev.at(i) - dt * lin.rhs[i])
            .collect();
        for (i, v) in bc.residuals(psi, prev) {
            r[i] = v;
        }
        r
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = residual(&psi, &lin);
    for iter in 0..ctl.newton_max_iter {
        let norm = sup(&r);
        if !norm.is_finite() {
            return Err(SolveFailure::Diverged("non-finite Newton residual".into()));
        }
        if norm < ctl.newton_tol {
            return Ok((psi, iter));
        }
        let mut jac = BandMatrix::zeros(n, BAND, BAND);
        for (i, lo, w, _) in &bc.rows {
            for j in 0..WIDTH {
                jac.add(*i, lo + j, w[j]);
            }
        }
        for i in (0..n).filter(|&i| !bc.is_boundary(n, i)) {
            let (lo, w1) = st.row(1, i);
            let (_, w2) = st.row(2, i);
            jac.add(i, i, 1.0 + dt);
            for j in 0..WIDTH {
                jac.add(i, lo + j, -dt * (lin.c1[i] * w1[j] + lin.c2[i] * w2[j]));
            }
        }
        let lu = jac.factor().map_err(|e| SolveFailure::Diverged(e.to_string()))?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = lu.solve(&rhs);
        // Damped update: halve until the metric stays positive and the
        // residual does not blow up.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = psi
                .values()
                .iter()
                .zip(&delta)
                .map(|(p, d)| p + step * d)
                .collect();
            let trial = Profile::new(g.clone(), trial).map_err(SolveFailure::Fatal)?;
            match linearize(&trial, gauge, soliton) {
                Ok(l) => {
                    let rt = residual(&trial, &l);
                    if sup(&rt) <= norm || step < 1.0 / 64.0 || sup(&rt) < ctl.newton_tol {
                        accepted = Some((trial, l, rt));
                        break;
                    }
                }
                Err(LabError::Positivity { .. }) => {}
                Err(e) => return Err(SolveFailure::Fatal(e)),
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, l, rt)) => {
                psi = p;
                lin = l;
                r = rt;
            }
            None => {
                return Err(SolveFailure::Diverged(format!(
                    "no positive Newton update at iteration {iter}"
                )))
            }
        }
    }
    if sup(&r) < ctl.newton_tol {
        Ok((psi, ctl.newton_max_iter))
    } else {
        Err(SolveFailure::Diverged(format!(
            "Newton residual {:e} after {} iterations",
            sup(&r),
            ctl.newton_max_iter
        )))
    }
}

fn extrapolate_guess(psi: &Profile, psi_dot: &Profile, dt: f64) -> Profile {
    psi.zip(psi_dot, |p, d| p + dt * d)
}

fn failure(state: &FlowState, reason: String) -> LabError {
    LabError::StepFailure {
        tau: state.tau,
        reason,
        state_dump: Some(Box::new(state.psi())),
    }
}

/// One adaptive step, at most `dt_cap` long.
pub fn step_capped(state: &FlowState, ctl: &StepControl, dt_cap: f64) -> Result<(FlowState, StepRecord)> {
    ctl.validate()?;
    let soliton = &*state.soliton;
    let proposal = state.dt.clamp(ctl.dt_min, ctl.dt_max);
    let mut dt = proposal.min(dt_cap);
    let mut last_reason = String::from("local error above tolerance");
    loop {
        if dt < ctl.dt_min * (1.0 - 1e-12) && dt < dt_cap {
            return Err(failure(
                state,
                format!("step size {dt:e} fell below dt_min = {:e} ({last_reason})", ctl.dt_min),
            ));
        }
        let attempt = (|| {
            let (prev, c) = (&state.potential, state.gauge);
            let guess = extrapolate_guess(prev, &state.psi_dot, dt);
            let (full, i1) = backward_euler(prev, guess, c, dt, soliton, ctl)?;
            let guess = extrapolate_guess(prev, &state.psi_dot, 0.5 * dt);
            let (h1, i2) = backward_euler(prev, guess, c, 0.5 * dt, soliton, ctl)?;
            let guess = h1.zip(prev, |p, q| 2.0 * p - q);
            let (h2, i3) = backward_euler(&h1, guess, c, 0.5 * dt, soliton, ctl)?;
            Ok((full, h2, i1 + i2 + i3))
        })();
        let (full, half, iters) = match attempt {
            Ok(v) => v,
            Err(SolveFailure::Fatal(e)) => return Err(e),
            Err(SolveFailure::Diverged(reason)) => {
                last_reason = reason;
                dt *= 0.5;
                continue;
            }
        };
        let err = full
            .values()
            .iter()
            .zip(half.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / ctl.local_tol;
        if !err.is_finite() || err > 1.0 {
            last_reason = format!("local error {:e} above tolerance", err * ctl.local_tol);
            let shrink = if err.is_finite() {
                (ctl.safety / err.sqrt()).max(SHRINK_MIN)
            } else {
                SHRINK_MIN
            };
            dt *= shrink;
            continue;
        }
        let extrapolated = half.zip(&full, |h, f| 2.0 * h - f);
        let c = state.gauge;
        let (potential, psi_dot) = match gauged_rhs(&extrapolated, c, soliton) {
            Ok(d) => (extrapolated, d),
            Err(LabError::Positivity { .. }) => {
                let d = gauged_rhs(&half, c, soliton)?;
                (half, d)
            }
            Err(e) => return Err(e),
        };
        let (potential, gauge) = regauge(potential, c);
        let grow = if err == 0.0 {
            GROWTH_MAX
        } else {
            (ctl.safety / err.sqrt()).min(GROWTH_MAX)
        };
        // A step shortened only to land on dt_cap keeps the larger proposal.
        let next = if dt >= proposal * (1.0 - 1e-12) || dt < dt_cap {
            dt * grow
        } else {
            proposal.max(dt * grow)
        };
        let tau = state.tau + dt;
        let new = FlowState {
            tau,
            potential,
            gauge,
            psi_dot,
            soliton: state.soliton.clone(),
            step_count: state.step_count + 1,
            dt: next.clamp(ctl.dt_min, ctl.dt_max),
            last_newton_iters: iters,
        };
        let record = StepRecord {
            step: new.step_count,
            tau,
            dt,
            newton_iters: iters,
            error_estimate: err * ctl.local_tol,
            sup_psi_dot: new.sup_psi_dot(),
        };
        return Ok((new, record));
    }
}

/// One adaptive implicit step with the controller's proposed size.
pub fn step(state: &FlowState, ctl: &StepControl) -> Result<FlowState> {
    Ok(step_capped(state, ctl, f64::INFINITY)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub tau: f64,
    pub dt: f64,
    pub newton_iters: usize,
    pub error_estimate: f64,
    pub sup_psi_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// tau_end was shorter than the first step; nothing was done.
    NoOp,
    ReachedEnd,
    /// sup|ψ̇| fell below the convergence threshold.
    Converged,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub status: RunStatus,
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,tau,dt,newton_iters,error_estimate,sup_psi_dot\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{:.16e}\n",
                r.step, r.tau, r.dt, r.newton_iters, r.error_estimate, r.sup_psi_dot
            ));
        }
        s
    }
}

/// Callback receiving read-only snapshots at the sampling cadence.
pub type Hook<'a> = &'a mut (dyn FnMut(&FlowState) -> Result<()> + Send);

/// Integrates to `tau_end`, landing exactly on multiples of `cadence` where
/// the hooks run (also at the start and at the final state).
pub fn run(
    state0: FlowState,
    ctl: &StepControl,
    tau_end: f64,
    cadence: f64,
    hooks: &mut [Hook<'_>],
) -> Result<(FlowState, RunLog)> {
    ctl.validate()?;
    if !(cadence > 0.0) {
        return Err(LabError::Config(format!("sampling cadence must be positive, got {cadence}")));
    }
    if !(tau_end - state0.tau >= ctl.dt_init) {
        return Ok((
            state0,
            RunLog {
                status: RunStatus::NoOp,
                steps: Vec::new(),
            },
        ));
    }
    let mut state = state0;
    let mut steps = Vec::new();
    let call = |s: &FlowState, hooks: &mut [Hook<'_>]| -> Result<()> {
        for h in hooks.iter_mut() {
            h(s)?;
        }
        Ok(())
    };
    call(&state, hooks)?;
    let t0 = state.tau;
    let mut k = 1usize;
    let mut status = RunStatus::ReachedEnd;
    let eps = 1e-12 * tau_end.abs().max(1.0);
    while state.tau < tau_end - eps {
        let mut target = (t0 + k as f64 * cadence).min(tau_end);
        while target <= state.tau + eps {
            k += 1;
            target = (t0 + k as f64 * cadence).min(tau_end);
        }
        let (mut next, rec) = step_capped(&state, ctl, target - state.tau)?;
        let landed = (next.tau - target).abs() <= eps;
        if landed {
            next.tau = target;
        }
        steps.push(StepRecord { tau: next.tau, ..rec });
        state = next;
        let converged = state.sup_psi_dot() < CONVERGED_PSI_DOT;
        if landed || converged {
            call(&state, hooks)?;
            if landed {
                k += 1;
            }
        }
        if converged {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok((state, RunLog { status, steps }))
}
