//! Initial Kähler potentials ψ₀ and numerical checks of the growth and decay
//! hypotheses (Conditions I and II) that the flow theory places on them.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{
    christoffel_energy, curvature_norm, ddbar_derivative_norms, grad_norm_sq, InvariantMetric,
};
use crate::radial::{linear_fit, Profile, EDGE};
use crate::soliton::SolitonData;

/// Below this every sample of a clause quantity counts as zero.
pub const ABSOLUTE_FLOOR: f64 = 1e-10;
/// Allowed shortfall of a measured decay exponent.
pub const EXPONENT_SLACK: f64 = 0.1;
/// Width of the outer fitting window, in decades of u.
pub const FIT_DECADES: f64 = 2.0;
/// Minimum usable window before a verdict is possible.
pub const MIN_CLEAN_DECADES: f64 = 1.5;

const BISECTION_STEPS: usize = 60;
const JITTER_ULPS: f64 = 4.0;
const NOISE_FACTOR: f64 = 10.0;

/// How ψ₀ was produced, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Perturbation {
    LinearInF {
        alpha: f64,
    },
    CompactBump {
        center_u: f64,
        width_decades: f64,
        amplitude: f64,
    },
    /// ψ₀ = κ·f·H, with H a smooth step from 0 to 1 across
    /// `onset_u`·10^(±width_decades): zero near the origin and κ·f outside.
    AsymptoticallyLinear {
        kappa: f64,
        onset_u: f64,
        width_decades: f64,
    },
    Custom {
        label: String,
    },
}

impl Perturbation {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Perturbation::LinearInF { .. } => "linear_in_f",
            Perturbation::CompactBump { .. } => "compact_bump",
            Perturbation::AsymptoticallyLinear { .. } => "asymptotically_linear",
            Perturbation::Custom { .. } => "custom",
        }
    }
}

/// An admissible initial potential: g + i∂∂̄ψ₀ is positive at every node.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub psi0: Profile,
    pub params: Perturbation,
}

fn admit(soliton: &SolitonData, psi0: Profile, params: Perturbation) -> Result<InitialData> {
    match soliton.metric.perturbed(&psi0) {
        Ok(_) => Ok(InitialData { psi0, params }),
        Err(e @ LabError::Positivity { .. }) => Err(LabError::Rejected {
            reason: e.to_string(),
            max_admissible_amplitude: None,
        }),
        Err(e) => Err(e),
    }
}

/// ψ₀ = α·f. The perturbed metric is (1+α)g + α·Ric(g).
pub fn make_linear_in_f(soliton: &SolitonData, alpha: f64) -> Result<InitialData> {
    if !alpha.is_finite() {
        return Err(LabError::Domain(format!("alpha must be finite, got {alpha}")));
    }
    admit(soliton, soliton.f.scale(alpha), Perturbation::LinearInF { alpha })
}

/// The smooth bump exp(1 − 1/(1 − y²)) in y = log10(u/center)/width, scaled by
/// `amplitude`; exactly zero outside |y| < 1.
pub fn bump_profile(soliton: &SolitonData, center_u: f64, width_decades: f64, amplitude: f64) -> Profile {
    let lc = center_u.ln();
    let w = width_decades * std::f64::consts::LN_10;
    Profile::from_fn(soliton.grid(), |u| {
        let y = (u.ln() - lc) / w;
        if y.abs() < 1.0 {
            amplitude * (1.0 - 1.0 / (1.0 - y * y)).exp()
        } else {
            0.0
        }
    })
}

pub fn make_compact_bump(
    soliton: &SolitonData,
    center_u: f64,
    width_decades: f64,
    amplitude: f64,
) -> Result<InitialData> {
    if !(center_u > 0.0 && width_decades > 0.0 && amplitude.is_finite()) {
        return Err(LabError::Domain(format!(
            "bump needs center_u > 0, width_decades > 0 and finite amplitude, got ({center_u}, {width_decades}, {amplitude})"
        )));
    }
    let g = soliton.grid();
    let spread = 10f64.powf(width_decades);
    let (lo, hi) = (center_u / spread, center_u * spread);
    if !(lo > 10.0 * g.u_min() && hi < g.u_max() / 10.0) {
        return Err(LabError::Domain(format!(
            "bump support [{lo:e}, {hi:e}] must lie strictly inside ({:e}, {:e})",
            10.0 * g.u_min(),
            g.u_max() / 10.0
        )));
    }
    let params = Perturbation::CompactBump {
        center_u,
        width_decades,
        amplitude,
    };
    let psi0 = bump_profile(soliton, center_u, width_decades, amplitude);
    match soliton.metric.perturbed(&psi0) {
        Ok(_) => Ok(InitialData { psi0, params }),
        Err(LabError::Positivity { component, node, u, value }) => {
            let unit = bump_profile(soliton, center_u, width_decades, amplitude.signum());
            let ok = |a: f64| soliton.metric.perturbed(&unit.scale(a)).is_ok();
            let (mut good, mut bad) = (0.0, amplitude.abs());
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (good + bad);
                if ok(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            let max_amp = amplitude.signum() * good;
            Err(LabError::Rejected {
                reason: format!(
                    "amplitude {amplitude} makes the {component} eigenvalue {value:e} at node {node} (u = {u:e}); largest admissible amplitude is {max_amp:e}"
                ),
                max_admissible_amplitude: Some(max_amp),
            })
        }
        Err(e) => Err(e),
    }
}

fn smooth_step(y: f64) -> f64 {
    let phi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (phi((1.0 + y) / 2.0), phi((1.0 - y) / 2.0));
    a / (a + b)
}

pub fn make_asymptotically_linear(
    soliton: &SolitonData,
    kappa: f64,
    onset_u: f64,
    width_decades: f64,
) -> Result<InitialData> {
    if !(kappa.is_finite() && onset_u > 0.0 && width_decades > 0.0) {
        return Err(LabError::Domain(format!(
            "asymptotically linear data needs finite kappa, onset_u > 0, width_decades > 0, got ({kappa}, {onset_u}, {width_decades})"
        )));
    }
    let lc = onset_u.log10();
    let psi0 = soliton
        .f
        .map_u(|u, f| kappa * f * smooth_step((u.log10() - lc) / width_decades));
    admit(
        soliton,
        psi0,
        Perturbation::AsymptoticallyLinear {
            kappa,
            onset_u,
            width_decades,
        },
    )
}

pub fn make_custom(soliton: &SolitonData, psi0: Profile, label: impl Into<String>) -> Result<InitialData> {
    soliton.f.ensure_same_grid(&psi0)?;
    psi0.check_finite()?;
    admit(soliton, psi0, Perturbation::Custom { label: label.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// One clause of a condition. Exponents are decay exponents in f: a quantity
/// behaving like f^(−e) has exponent e.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub clause: String,
    pub exponent_required: Option<f64>,
    pub exponent_measured: Option<f64>,
    pub floor_hit: bool,
    /// Level below which the quantity counts as zero: the absolute floor or,
    /// if larger, ten times the rounding noise of the quantity on this grid.
    pub floor: f64,
    /// A finite constant for clauses checked by a bound rather than a rate.
    pub bound: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub passed: bool,
    pub status: Status,
    /// Constant C₀ with g/C₀ ≤ g_ψ₀ ≤ C₀·g on the grid.
    pub bi_lipschitz_constant: f64,
    #[serde(rename = "clauses")]
    pub witnesses: Vec<Witness>,
}

/// Outer fitting window: interior nodes in the last `FIT_DECADES` decades.
fn fit_window(f: &Profile) -> (Vec<usize>, f64) {
    let g = f.grid();
    let hi = g.len() - EDGE - 1;
    let u_lo = g.u_max() / 10f64.powf(FIT_DECADES);
    let idx: Vec<usize> = (EDGE..=hi).filter(|&i| g.u(i) >= u_lo).collect();
    let decades = match (idx.first(), idx.last()) {
        (Some(&a), Some(&b)) if b > a => (g.u(b) / g.u(a)).log10(),
        _ => 0.0,
    };
    (idx, decades)
}

fn rate_clause(name: &str, required: f64, q: &Profile, floor: f64, f: &Profile, window: &[usize], clean: bool) -> Witness {
    let vals: Vec<(f64, f64)> = window.iter().map(|&i| (f.at(i), q.at(i).abs())).collect();
    let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.1));
    let mut w = Witness {
        clause: name.to_string(),
        exponent_required: Some(required),
        exponent_measured: None,
        floor_hit: false,
        floor,
        bound: None,
        status: Status::Inconclusive,
    };
    if !sup.is_finite() {
        w.status = Status::Fail;
        return w;
    }
    if sup < floor {
        w.floor_hit = true;
        w.status = Status::Pass;
        return w;
    }
    if !clean {
        return w;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = vals
        .iter()
        .filter(|v| v.1 > 0.0)
        .map(|&(fv, qv)| (fv.ln(), qv.ln()))
        .unzip();
    if x.len() < 3 {
        return w;
    }
    let (slope, _, _) = linear_fit(&x, &y);
    let measured = -slope;
    w.exponent_measured = Some(measured);
    w.status = if measured >= required - EXPONENT_SLACK {
        Status::Pass
    } else {
        Status::Fail
    };
    w
}

fn structural(name: &str, ok: bool, bound: Option<f64>) -> Witness {
    Witness {
        clause: name.to_string(),
        exponent_required: None,
        exponent_measured: None,
        floor_hit: false,
        floor: ABSOLUTE_FLOOR,
        bound,
        status: if ok { Status::Pass } else { Status::Fail },
    }
}

fn bi_lipschitz(g: &InvariantMetric, gp: &InvariantMetric) -> Profile {
    let r = |a: f64, b: f64| (a / b).max(b / a);
    let perp = gp.lam_perp.zip(&g.lam_perp, r);
    let rad = gp.lam_rad.zip(&g.lam_rad, r);
    perp.zip(&rad, f64::max)
}

/// Perturbs every value by a few ulps in a fixed pseudo-random pattern.
fn jitter(p: &Profile) -> Profile {
    let values = p
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let h = (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            let r = (h as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0;
            v * (1.0 + JITTER_ULPS * f64::EPSILON * r)
        })
        .collect();
    Profile::raw(p.grid().clone(), values)
}

type Clause = (String, f64, Profile);

/// The clause quantities of a condition, with required decay exponents.
fn clause_quantities(psi: &Profile, soliton: &SolitonData, which: Condition) -> Result<Vec<Clause>> {
    let g = &soliton.metric;
    let a = soliton.scale.a;
    let gp = g.perturbed(psi)?;
    let dpsi = psi.derivative(1)?;
    let w = dpsi.map_u(|u, d| a * u * d).sub(psi);
    let grad_w = grad_norm_sq(&w, g)?.map(f64::sqrt);
    let mut out: Vec<Clause> = vec![
        ("psi0_growth".into(), -1.0, psi.map(f64::abs)),
        ("x_psi0_minus_psi0".into(), 0.0, w.clone()),
        ("grad_x_psi0_minus_psi0".into(), 0.5, grad_w),
    ];
    let [d0, d1, d2] = ddbar_derivative_norms(psi, g)?;
    match which {
        Condition::I => {
            out.push(("bi_lipschitz".into(), 0.0, bi_lipschitz(g, &gp)));
            out.push(("curvature_bounded".into(), 0.0, curvature_norm(&gp)?));
            out.push(("metric_difference_k0".into(), 0.0, d0));
            out.push(("metric_difference_k1".into(), 0.5, d1));
            out.push(("christoffel_energy".into(), 1.0, christoffel_energy(g, &gp)?));
        }
        Condition::II => {
            // L_{X/2}g_ψ₀ − g_ψ₀ minus the background's own L_{X/2}g − g.
            let lw = ddbar_derivative_norms(&w, g)?;
            for (k, (d, l)) in [d0, d1, d2].into_iter().zip(lw).enumerate() {
                let kk = k as f64;
                out.push((format!("metric_difference_k{k}"), kk / 2.0, d));
                out.push((format!("soliton_defect_k{k}"), 1.0 + kk / 2.0, l));
            }
        }
    }
    Ok(out)
}

/// Numerically tests Condition I or II for ψ₀ on the given soliton. Decay
/// exponents are fitted against f over the outer two decades of the grid.
pub fn check_condition(data: &InitialData, soliton: &SolitonData, which: Condition) -> Result<ConditionReport> {
    let psi = &data.psi0;
    soliton.f.ensure_same_grid(psi)?;
    let g = &soliton.metric;
    let f = &soliton.f;
    let (window, decades) = fit_window(f);
    let clean = decades >= MIN_CLEAN_DECADES;

    let mut out = Vec::new();
    let gp = match g.perturbed(psi) {
        Ok(m) => m,
        Err(LabError::Positivity { .. }) => {
            out.push(structural("metric_positive", false, None));
            return Ok(ConditionReport {
                condition: which,
                passed: false,
                status: Status::Fail,
                bi_lipschitz_constant: f64::INFINITY,
                witnesses: out,
            });
        }
        Err(e) => return Err(e),
    };
    let ratio = bi_lipschitz(g, &gp);
    let c0 = ratio.max();
    out.push(structural("metric_positive", true, None));
    // For invariant ψ₀ the Killing field JX acts trivially.
    out.push(structural("killing_jx", true, None));

    let q = clause_quantities(psi, soliton, which)?;
    let q_jit = clause_quantities(&jitter(psi), soliton, which)?;
    for ((name, req, qv), (_, _, qj)) in q.iter().zip(&q_jit) {
        let noise = window.iter().fold(0.0f64, |m, &i| m.max((qv.at(i) - qj.at(i)).abs()));
        let floor = ABSOLUTE_FLOOR.max(NOISE_FACTOR * noise);
        let mut w = rate_clause(name, *req, qv, floor, f, &window, clean);
        if name == "bi_lipschitz" {
            w.bound = Some(c0);
            if !c0.is_finite() {
                w.status = Status::Fail;
            }
        }
        out.push(w);
    }

    let status = if out.iter().any(|w| w.status == Status::Fail) {
        Status::Fail
    } else if out.iter().any(|w| w.status == Status::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Pass
    };
    Ok(ConditionReport {
        condition: which,
        passed: status == Status::Pass,
        status,
        bi_lipschitz_constant: c0,
        witnesses: out,
    })
}
