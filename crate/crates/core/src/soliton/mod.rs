//! Expanding soliton backgrounds: the Gaussian and Cao's U(n)-invariant family.

pub mod rk45;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{
    self, del_norm_sq, normalization_constant, scalar_curvature, InvariantMetric, VectorFieldScale,
};
use crate::io::{atomic_write, write_json};
use crate::radial::{linear_fit, Profile, RadialGrid};

/// Certification thresholds.
pub const SOLITON_EQ_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-6;
pub const NORMALIZATION_TOL: f64 = geometry::NORMALIZATION_TOL;
/// Allowed relative deviation of the fitted cone exponent from 1/λ.
pub const CONE_EXPONENT_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Sup of both eigenvalue components of i∂∂̄f − Ric − ω.
    pub soliton_eq_sup: f64,
    /// Sup of |Δf − n − R|.
    pub identity_sup: f64,
    /// Sup of |f − |∂f|² − R − n|.
    pub normalization_sup: f64,
}

impl Residuals {
    pub fn within_thresholds(&self) -> bool {
        self.soliton_eq_sup <= SOLITON_EQ_TOL
            && self.identity_sup <= IDENTITY_TOL
            && self.normalization_sup <= NORMALIZATION_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolitonKind {
    Gaussian,
    Cao { lambda: f64, inner_slope: f64 },
}

/// A certified expanding soliton on a radial grid.
#[derive(Debug, Clone)]
pub struct SolitonData {
    pub kind: SolitonKind,
    pub metric: InvariantMetric,
    pub f: Profile,
    pub scale: VectorFieldScale,
    pub cone_exponent: f64,
    pub residuals: Residuals,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    soliton_eq_sup: f64,
    identity_sup: f64,
    normalization_sup: f64,
    cone_exponent: f64,
    n: usize,
    a: f64,
    #[serde(flatten)]
    kind: SolitonKind,
}

impl SolitonData {
    pub fn n(&self) -> usize {
        self.metric.n
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.f.grid()
    }

    /// Writes `<stem>_P.csv`, `<stem>_f.csv` and `<stem>.json` into `dir`.
    pub fn write_bundle(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        atomic_write(dir.join(format!("{stem}_P.csv")), self.metric.p.to_csv().as_bytes())?;
        atomic_write(dir.join(format!("{stem}_f.csv")), self.f.to_csv().as_bytes())?;
        let side = Sidecar {
            soliton_eq_sup: self.residuals.soliton_eq_sup,
            identity_sup: self.residuals.identity_sup,
            normalization_sup: self.residuals.normalization_sup,
            cone_exponent: self.cone_exponent,
            n: self.n(),
            a: self.scale.a,
            kind: self.kind,
        };
        write_json(dir.join(format!("{stem}.json")), &side)
    }
}

/// The Gaussian expander on C^n: P = u, f = u + n, a = 1.
pub fn gaussian(n: usize, grid: &Arc<RadialGrid>) -> Result<SolitonData> {
    if n < 2 {
        return Err(LabError::Domain(format!("complex dimension must be >= 2, got {n}")));
    }
    let one = Profile::constant(grid, 1.0);
    let metric = InvariantMetric::from_parts(n, Profile::from_fn(grid, |u| u), one.clone(), one)?;
    let f = Profile::from_fn(grid, |u| u + n as f64);
    let scale = VectorFieldScale::new(1.0)?;
    let residuals = certify(&metric, &f, scale)?;
    Ok(SolitonData {
        kind: SolitonKind::Gaussian,
        metric,
        f,
        scale,
        cone_exponent: 1.0,
        residuals,
    })
}

/// Residuals of the soliton equation and of the two soliton identities.
pub fn certify(m: &InvariantMetric, f: &Profile, _scale: VectorFieldScale) -> Result<Residuals> {
    m.p.ensure_same_grid(f)?;
    let q = m.log_det();
    let (q1, q2) = (q.derivative(1)?, q.derivative(2)?);
    let (f1, f2) = (f.derivative(1)?, f.derivative(2)?);
    let n = m.n as f64;
    let mut eq: f64 = 0.0;
    for i in f.grid().interior() {
        let u = f.grid().u(i);
        let r_perp = f1.at(i) + q1.at(i) - m.lam_perp.at(i);
        let r_rad = (f1.at(i) + u * f2.at(i)) + (q1.at(i) + u * q2.at(i)) - m.lam_rad.at(i);
        eq = eq.max(r_perp.abs()).max(r_rad.abs());
    }
    let r = scalar_curvature(m)?;
    let lap = geometry::laplacian(f, m)?;
    let identity = lap.sub(&r).map(|v| v - n).interior_sup_abs();
    let g = del_norm_sq(f, m)?;
    let norm = f.sub(&g).sub(&r).map(|v| v - n).interior_sup_abs();
    Ok(Residuals {
        soliton_eq_sup: eq,
        identity_sup: identity,
        normalization_sup: norm,
    })
}

/// Slope of log(u·lam_rad) against log u over the nodes with u ≥ u_max·10^(−decades).
/// For a conical end u·lam_rad ~ c·u^p, so the slope is the cone exponent p.
pub fn fit_cone_exponent(m: &InvariantMetric, decades: f64) -> f64 {
    let g = m.lam_rad.grid();
    let lo = g.u_max() * 10f64.powf(-decades);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..g.len() {
        let u = g.u(i);
        if u >= lo {
            x.push(u.ln());
            y.push((u * m.lam_rad.at(i)).ln());
        }
    }
    linear_fit(&x, &y).0
}

/// Settings for [`cao`] beyond the physical parameters.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    /// Convergence tolerance on log of the inner slope.
    pub shoot_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Scan range for the inner slope.
    pub slope_range: (f64, f64),
}

impl ShootingOptions {
    pub fn with_tol(shoot_tol: f64) -> Self {
        ShootingOptions {
            shoot_tol,
            rtol: 1e-13,
            atol: 1e-15,
            slope_range: (1e-8, 1e4),
        }
    }
}

struct Trajectory {
    /// log(lam_perp / b), log(lam_rad / b), P at every node.
    states: Vec<[f64; 3]>,
}

/// Integrates the radial soliton ODE in s = log u with inner slope b.
///
/// With φ = uP' and χ = uφ' the soliton equation a·φ' = P' − Q' becomes the
/// autonomous system χ_s/χ = 1 + φ − (n−1)(χ/φ − 1) − aχ, φ_s = χ. It is
/// integrated for the deviations ℓ = log(lam_perp/b), m = log(lam_rad/b),
/// which stay O(u) near the origin instead of sitting on a large constant.
fn integrate_soliton(a: f64, n: usize, b: f64, grid: &RadialGrid, opt: &ShootingOptions) -> Result<Trajectory> {
    let k = (n - 1) as f64;
    let u0 = grid.u_min();
    let c2 = b * b * (1.0 - a) / (n as f64 + 1.0);
    let y0 = [
        (c2 * u0 / b).ln_1p(),
        (2.0 * c2 * u0 / b).ln_1p(),
        b * u0 + 0.5 * c2 * u0 * u0,
    ];
    let s: Vec<f64> = grid.nodes().iter().map(|u| u.ln()).collect();
    let rhs = |t: f64, y: &[f64; 3]| {
        let u = t.exp();
        let r = (y[1] - y[0]).exp();
        let phi = u * b * y[0].exp();
        let chi = u * b * y[1].exp();
        [r - 1.0, phi - k * (r - 1.0) - a * chi, phi]
    };
    let tol = rk45::Tolerance {
        rtol: opt.rtol,
        atol: opt.atol,
        max_steps: 2_000_000,
    };
    let states = rk45::integrate(rhs, &s, y0, tol)?;
    Ok(Trajectory { states })
}

/// log of χ(u_max) relative to the unit cone p²·u_max^p (p = 1/a).
fn cone_mismatch(a: f64, n: usize, b: f64, grid: &RadialGrid, opt: &ShootingOptions) -> Result<f64> {
    let tr = integrate_soliton(a, n, b, grid, opt)?;
    let last = tr.states.last().expect("non-empty trajectory");
    let p = 1.0 / a;
    let um = grid.u_max();
    let log_chi = um.ln() + b.ln() + last[1];
    Ok(log_chi - (2.0 * p.ln() + p * um.ln()))
}

/// Cao's expander with asymptotic cone ∂∂̄(u^{1/λ}).
///
/// The vector-field scale is a = λ, forced by the balance a·p = 1 between
/// drift and potential on the cone u^p. The free inner slope b = P'(0) is a
/// pure scaling gauge (φ_b(u) = φ_1(bu)); it is fixed by shooting so that the
/// cone coefficient equals one, i.e. u·lam_rad → p²·u^p.
pub fn cao(lambda: f64, n: usize, grid: &Arc<RadialGrid>, shoot_tol: f64) -> Result<SolitonData> {
    cao_with(lambda, n, grid, ShootingOptions::with_tol(shoot_tol))
}

pub fn cao_with(lambda: f64, n: usize, grid: &Arc<RadialGrid>, opt: ShootingOptions) -> Result<SolitonData> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(LabError::Domain(format!("Cao family needs lambda > 1, got {lambda}")));
    }
    if n < 2 {
        return Err(LabError::Domain(format!("complex dimension must be >= 2, got {n}")));
    }
    if !(opt.shoot_tol >= 1e-12) {
        return Err(LabError::Domain(format!(
            "shoot_tol must be at least 1e-12, got {}",
            opt.shoot_tol
        )));
    }
    let a = lambda;
    let (lo, hi) = opt.slope_range;

    // Bracket on a logarithmic scan.
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    let mut b = lo;
    while b <= hi * (1.0 + 1e-12) {
        let m = cone_mismatch(a, n, b, grid, &opt)?;
        if let Some((bp, mp)) = prev {
            if mp.signum() != m.signum() {
                bracket = Some((bp, b, mp));
                break;
            }
        }
        prev = Some((b, m));
        b *= 10.0;
    }
    let (mut bl, mut bh, ml) = bracket.ok_or_else(|| {
        LabError::Construction(format!(
            "no sign change of the cone mismatch for inner slopes in [{lo:e}, {hi:e}]"
        ))
    })?;

    // Bisection in log b.
    let mut iters = 0;
    while (bh / bl).ln() > opt.shoot_tol && iters < 200 {
        let mid = (bl * bh).sqrt();
        let m = cone_mismatch(a, n, mid, grid, &opt)?;
        if m == 0.0 {
            bl = mid;
            bh = mid;
            break;
        }
        if m.signum() == ml.signum() {
            bl = mid;
        } else {
            bh = mid;
        }
        iters += 1;
    }
    let b = (bl * bh).sqrt();
    let tr = integrate_soliton(a, n, b, grid, &opt)?;

    let lam_perp = Profile::new(grid.clone(), tr.states.iter().map(|y| b * y[0].exp()).collect())?;
    let lam_rad = Profile::new(grid.clone(), tr.states.iter().map(|y| b * y[1].exp()).collect())?;
    let p = Profile::new(grid.clone(), tr.states.iter().map(|y| y[2]).collect())?;
    let metric = InvariantMetric::from_parts(n, p, lam_perp, lam_rad)?;
    let scale = VectorFieldScale::new(a)?;

    let f0 = metric.lam_perp.map_u(|u, lp| a * u * lp);
    let (c, _) = normalization_constant(&metric, &f0)?;
    let f = f0.map(|v| v + c);
    let residuals = certify(&metric, &f, scale)?;

    let cone_exponent = fit_cone_exponent(&metric, 1.0);
    let expected = 1.0 / lambda;
    if ((cone_exponent - expected) / expected).abs() > CONE_EXPONENT_TOL {
        return Err(LabError::Certification(format!(
            "fitted cone exponent {cone_exponent} deviates from 1/lambda = {expected} by more than 2%"
        )));
    }
    if residuals.soliton_eq_sup > SOLITON_EQ_TOL {
        return Err(LabError::Certification(format!(
            "soliton equation residual {:e} exceeds {SOLITON_EQ_TOL:e}",
            residuals.soliton_eq_sup
        )));
    }
    Ok(SolitonData {
        kind: SolitonKind::Cao {
            lambda,
            inner_slope: b,
        },
        metric,
        f,
        scale,
        cone_exponent,
        residuals,
    })
}
