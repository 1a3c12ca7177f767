//! Closed-form geometry of U(n)-invariant Kähler metrics ω = i∂∂̄P(u).
//!
//! At the point (√u, 0, …, 0) the metric is diagonal with eigenvalue
//! `lam_rad = (uP')'` in the radial complex direction and `lam_perp = P'`
//! (multiplicity n−1) transversally. Every invariant function depends on u
//! only, so it is automatically annihilated by JX; nothing here needs to
//! track angular dependence.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::radial::Profile;

/// Scale `a` of the soliton vector field: X·h = 2a·u·h'(u) on invariant h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldScale {
    pub a: f64,
}

impl VectorFieldScale {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a.is_finite() {
            Ok(VectorFieldScale { a })
        } else {
            Err(LabError::Domain(format!("vector-field scale must be positive, got {a}")))
        }
    }
}

/// Kähler potential together with its two metric eigenvalue profiles.
#[derive(Debug, Clone)]
pub struct InvariantMetric {
    pub n: usize,
    pub p: Profile,
    pub lam_perp: Profile,
    pub lam_rad: Profile,
}

/// Scans nodes from the inside out and reports the first non-positive
/// eigenvalue.
fn check_positive(lam_perp: &Profile, lam_rad: &Profile) -> Result<()> {
    lam_perp.check_finite()?;
    lam_rad.check_finite()?;
    for i in 0..lam_perp.len() {
        for (name, p) in [("perp", lam_perp), ("radial", lam_rad)] {
            if p.at(i) <= 0.0 {
                return Err(LabError::Positivity {
                    component: name,
                    node: i,
                    u: p.grid().u(i),
                    value: p.at(i),
                });
            }
        }
    }
    Ok(())
}

/// Eigenvalues (P', (uP')') of i∂∂̄P, checked for positivity.
pub fn metric_eigenvalues(p: &Profile, n: usize) -> Result<InvariantMetric> {
    let d1 = p.derivative(1)?;
    let d2 = p.derivative(2)?;
    let lam_rad = d1.zip(&d2.map_u(|u, v| u * v), |a, b| a + b);
    InvariantMetric::from_parts(n, p.clone(), d1, lam_rad)
}

impl InvariantMetric {
    /// Assembles a metric from eigenvalues known more accurately than by
    /// differencing P (e.g. straight from an ODE solution).
    pub fn from_parts(n: usize, p: Profile, lam_perp: Profile, lam_rad: Profile) -> Result<Self> {
        if n < 2 {
            return Err(LabError::Domain(format!("complex dimension must be >= 2, got {n}")));
        }
        p.ensure_same_grid(&lam_perp)?;
        p.ensure_same_grid(&lam_rad)?;
        check_positive(&lam_perp, &lam_rad)?;
        Ok(InvariantMetric {
            n,
            p,
            lam_perp,
            lam_rad,
        })
    }

    /// The metric g + i∂∂̄ψ.
    pub fn perturbed(&self, psi: &Profile) -> Result<InvariantMetric> {
        self.p.ensure_same_grid(psi)?;
        let d1 = psi.derivative(1)?;
        let d2 = psi.derivative(2)?;
        let lp = self.lam_perp.add(&d1);
        let lr = self.lam_rad.add(&d1).add(&d2.map_u(|u, v| u * v));
        InvariantMetric::from_parts(self.n, self.p.add(psi), lp, lr)
    }

    /// Sup over interior nodes of |lam_rad − lam_perp − u·lam_perp'|.
    pub fn consistency_residual(&self) -> Result<f64> {
        let d = self.lam_perp.derivative(1)?;
        let r = self
            .lam_rad
            .sub(&self.lam_perp)
            .sub(&d.map_u(|u, v| u * v));
        Ok(r.interior_sup_abs())
    }

    /// Q = (n−1) log lam_perp + log lam_rad, shifted so that Q(u_0) = 0.
    /// The shift is invisible to every derivative and keeps the values small.
    pub fn log_det(&self) -> Profile {
        let m = (self.n - 1) as f64;
        let (p0, r0) = (self.lam_perp.at(0), self.lam_rad.at(0));
        self.lam_perp
            .zip(&self.lam_rad, |p, r| m * (p / p0).ln() + (r / r0).ln())
    }
}

/// Ricci eigenvalues (ric_perp, ric_rad) = (−Q', −(uQ')').
pub fn ricci_profile(m: &InvariantMetric) -> Result<(Profile, Profile)> {
    let q = m.log_det();
    let q1 = q.derivative(1)?;
    let q2 = q.derivative(2)?;
    let ric_perp = q1.scale(-1.0);
    let ric_rad = q1.zip(&q2.map_u(|u, v| u * v), |a, b| -(a + b));
    Ok((ric_perp, ric_rad))
}

/// Kähler scalar curvature R_ω = tr_ω Ric.
pub fn scalar_curvature(m: &InvariantMetric) -> Result<Profile> {
    let (rp, rr) = ricci_profile(m)?;
    Ok(trace_pair(m, &rp, &rr))
}

/// tr_ω of an invariant (1,1)-form with eigenvalues (perp, rad).
pub fn trace_pair(m: &InvariantMetric, perp: &Profile, rad: &Profile) -> Profile {
    let k = (m.n - 1) as f64;
    let a = perp.div(&m.lam_perp).scale(k);
    a.add(&rad.div(&m.lam_rad))
}

/// Eigenvalues (h', (uh')') of i∂∂̄h.
pub fn ddbar_eigenvalues(h: &Profile) -> Result<(Profile, Profile)> {
    let d1 = h.derivative(1)?;
    let d2 = h.derivative(2)?;
    let rad = d1.zip(&d2.map_u(|u, v| u * v), |a, b| a + b);
    Ok((d1, rad))
}

/// Δ_ω h, without drift.
pub fn laplacian(h: &Profile, m: &InvariantMetric) -> Result<Profile> {
    let (p, r) = ddbar_eigenvalues(h)?;
    Ok(trace_pair(m, &p, &r))
}

/// Drift Laplacian Δ_ω h + (X/2)·h with (X/2)·h = a·u·h'.
pub fn drift_laplacian(h: &Profile, m: &InvariantMetric, scale: VectorFieldScale) -> Result<Profile> {
    m.p.ensure_same_grid(h)?;
    let lap = laplacian(h, m)?;
    let d1 = h.derivative(1)?;
    Ok(lap.add(&d1.map_u(|u, v| scale.a * u * v)))
}

/// |∂h|²_g = u·h'²/lam_rad.
pub fn del_norm_sq(h: &Profile, m: &InvariantMetric) -> Result<Profile> {
    let d1 = h.derivative(1)?;
    Ok(d1.zip(&m.lam_rad, |d, r| d * d / r).map_u(|u, v| u * v))
}

/// Real gradient norm |∇h|²_g = 2·|∂h|²_g.
pub fn grad_norm_sq(h: &Profile, m: &InvariantMetric) -> Result<Profile> {
    Ok(del_norm_sq(h, m)?.scale(2.0))
}

/// Normalized soliton potential and the quality of its normalization.
#[derive(Debug, Clone)]
pub struct HamiltonianPotential {
    pub f: Profile,
    pub constant: f64,
    /// sup over interior nodes of |f − |∂f|² − R_ω − n|.
    pub residual: f64,
}

impl HamiltonianPotential {
    pub fn normalized(&self) -> bool {
        self.residual <= NORMALIZATION_TOL
    }
}

pub const NORMALIZATION_TOL: f64 = 1e-6;

/// f = a·u·P' + c with c fixed so that f − |∂f|² − R_ω − n is as small as
/// possible in sup norm (midrange of the c-free residual).
pub fn hamiltonian_potential(m: &InvariantMetric, scale: VectorFieldScale) -> Result<HamiltonianPotential> {
    let f0 = m.lam_perp.map_u(|u, lp| scale.a * u * lp);
    let c = normalization_constant(m, &f0)?;
    let f = f0.map(|v| v + c.0);
    Ok(HamiltonianPotential {
        f,
        constant: c.0,
        residual: c.1,
    })
}

/// Returns (c, sup|f0 + c − |∂f0|² − R − n|) with c the sup-norm minimiser.
pub(crate) fn normalization_constant(m: &InvariantMetric, f0: &Profile) -> Result<(f64, f64)> {
    let r = scalar_curvature(m)?;
    let g = del_norm_sq(f0, m)?;
    let n = m.n as f64;
    let resid = f0.sub(&g).sub(&r).map(|v| v - n);
    let vals = resid.interior_values();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = -0.5 * (lo + hi);
    Ok((c, 0.5 * (hi - lo)))
}

/// The three independent curvature components in a unitary frame adapted to
/// the radial/transverse splitting: radial holomorphic sectional (`rad`),
/// mixed radial–transverse (`mixed`), transverse holomorphic sectional (`perp`).
#[derive(Debug, Clone)]
pub struct CurvatureComponents {
    pub rad: Profile,
    pub mixed: Profile,
    pub perp: Profile,
}

pub fn curvature_components(m: &InvariantMetric) -> Result<CurvatureComponents> {
    let lr = m.lam_rad.map(f64::ln);
    let lp = m.lam_perp.map(f64::ln);
    let u_dlog = |l: &Profile| -> Result<Profile> {
        let d1 = l.derivative(1)?;
        let d2 = l.derivative(2)?;
        Ok(d1.zip(&d2.map_u(|u, v| u * v), |a, b| a + b))
    };
    let rad = u_dlog(&lr)?.div(&m.lam_rad).scale(-1.0);
    let mixed = u_dlog(&lp)?.div(&m.lam_rad).scale(-1.0);
    let dp = m.lam_perp.derivative(1)?;
    let perp = dp.zip(&m.lam_perp, |d, l| -2.0 * d / (l * l));
    Ok(CurvatureComponents { rad, mixed, perp })
}

/// Pointwise norm |Rm(g)|_g.
pub fn curvature_norm(m: &InvariantMetric) -> Result<Profile> {
    let c = curvature_components(m)?;
    let k = (m.n - 1) as f64;
    let n = m.n as f64;
    let sq = c
        .rad
        .zip(&c.mixed, |a, b| a * a + 4.0 * k * b * b)
        .zip(&c.perp, |s, cc| s + 0.5 * n * k * cc * cc);
    Ok(sq.map(f64::sqrt))
}

/// Logarithmic derivatives (lam_rad'/lam_rad, lam_perp'/lam_perp).
fn connection_coefficients(m: &InvariantMetric) -> Result<(Profile, Profile)> {
    let gr = m.lam_rad.derivative(1)?.div(&m.lam_rad);
    let gt = m.lam_perp.derivative(1)?.div(&m.lam_perp);
    Ok((gr, gt))
}

/// S = |Γ(g_ψ) − Γ(g)|²_{g_ψ}.
pub fn christoffel_energy(base: &InvariantMetric, pert: &InvariantMetric) -> Result<Profile> {
    let (gr0, gt0) = connection_coefficients(base)?;
    let (gr1, gt1) = connection_coefficients(pert)?;
    let k = 2.0 * (base.n - 1) as f64;
    let dr = gr1.sub(&gr0);
    let dt = gt1.sub(&gt0);
    let s = dr.zip(&dt, |a, b| a * a + k * b * b);
    Ok(s.div(&pert.lam_rad).map_u(|u, v| u * v))
}

/// Norms |∇^k i∂∂̄h|_g for k = 0, 1, 2, all with respect to the Levi-Civita
/// connection of `m`. Covariant derivatives count both holomorphic and
/// antiholomorphic slots.
pub fn ddbar_derivative_norms(h: &Profile, m: &InvariantMetric) -> Result<[Profile; 3]> {
    m.p.ensure_same_grid(h)?;
    let (tp, tr) = ddbar_eigenvalues(h)?;
    form_derivative_norms(&tp, &tr, m)
}

/// Same norms for an invariant (1,1)-form given by its eigenvalues
/// (perp, rad), which need not come from differentiating a potential.
pub fn form_derivative_norms(tp: &Profile, tr: &Profile, m: &InvariantMetric) -> Result<[Profile; 3]> {
    m.p.ensure_same_grid(tp)?;
    m.p.ensure_same_grid(tr)?;
    let h = tp;
    let nn = m.n as f64;
    let k = nn - 1.0;
    let kp = tp.div(&m.lam_perp);
    let kr = tr.div(&m.lam_rad);
    let (gr, gt) = connection_coefficients(m)?;

    let n0 = kr.zip(&kp, |r, p| (r * r + k * p * p).sqrt());

    let kp1 = kp.derivative(1)?;
    let kr1 = kr.derivative(1)?;
    let n1 = {
        let s = kr1.zip(&kp1, |r, p| r * r + 2.0 * k * p * p);
        s.div(&m.lam_rad).map_u(|u, v| (2.0 * u * v).sqrt())
    };

    // Second derivatives are expressed through A = lam_perp·κ⊥' and its
    // first two derivatives.
    let a = kp1.mul(&m.lam_perp);
    let a1 = a.derivative(1)?;
    let b = a.mul(&gt.sub(&gr)).add(&a1);
    let b1 = b.derivative(1)?;
    let vals: Vec<f64> = (0..h.len())
        .map(|i| {
            let u = h.grid().u(i);
            let (av, a1v, bv, b1v) = (a.at(i), a1.at(i), b.at(i), b1.at(i));
            let (r, t) = (gr.at(i), gt.at(i));
            let (lr, lp) = (m.lam_rad.at(i), m.lam_perp.at(i));
            let d1 = 2.0 * u * a1v + u * u * b1v + u * bv - 2.0 * u * r * (2.0 * av + u * bv);
            let da = u * a1v - u * av * (r + t);
            let m1 = 2.0 * u * a1v + 2.0 * av + u * u * b1v + 2.0 * u * bv
                - u * r * (2.0 * av + u * bv);
            let m2 = av + u * a1v - u * av * r;
            let m3 = u * a1v + av - u * t * av;
            let m6 = 2.0 * av;
            let rr = lr * lr;
            let rp = lr * lp;
            let pp = lp * lp;
            let s = (d1 / rr).powi(2)
                + 3.0 * k * (da / rp).powi(2)
                + (m1 / rr).powi(2)
                + 2.0 * k * (m2 * m2 + m3 * m3) / (rp * rp)
                + k * (m6 / pp).powi(2)
                + 2.0 * k * (nn - 2.0) * (av / pp).powi(2);
            (2.0 * s).sqrt()
        })
        .collect();
    let n2 = Profile::new(h.grid().clone(), vals)?;
    Ok([n0, n1, n2])
}
