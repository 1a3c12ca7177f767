//! Pullbacks of invariant potentials and metrics under the dilations
//! generated by the soliton vector field.

use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::InvariantMetric;
use crate::radial::{interpolate, Profile, RadialGrid};

/// A pulled-back potential on the part of the grid where it is defined.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub profile: Profile,
    /// Valid range of u (nodes of the original grid).
    pub u_lo: f64,
    pub u_hi: f64,
    /// Fraction of the original nodes that are covered.
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct PullbackMetric {
    pub metric: InvariantMetric,
    pub u_lo: f64,
    pub u_hi: f64,
    pub coverage: f64,
}

/// Nodes u of `grid` with sigma·u inside the grid.
fn covered(grid: &Arc<RadialGrid>, sigma: f64) -> Result<(Arc<RadialGrid>, usize)> {
    let (lo, hi) = (grid.u_min(), grid.u_max());
    let slack = 1e-13;
    let first = grid
        .nodes()
        .iter()
        .position(|&u| sigma * u >= lo * (1.0 - slack));
    let nodes: Vec<f64> = grid
        .nodes()
        .iter()
        .copied()
        .filter(|&u| sigma * u >= lo * (1.0 - slack) && sigma * u <= hi * (1.0 + slack))
        .collect();
    if nodes.len() < crate::radial::MIN_NODES {
        return Err(LabError::Range {
            lo: lo / sigma,
            hi: hi / sigma,
            src_lo: lo,
            src_hi: hi,
        });
    }
    let sub = if nodes.len() == grid.len() {
        grid.clone()
    } else {
        RadialGrid::from_nodes(nodes, grid.spacing())?
    };
    Ok((sub, first.unwrap_or(0)))
}

fn sample(p: &Profile, target: &Arc<RadialGrid>, sigma: f64) -> Vec<f64> {
    let src = p.grid();
    let (lo, hi) = (src.u_min(), src.u_max());
    target
        .nodes()
        .iter()
        .map(|&u| interpolate(src.nodes(), p.values(), (sigma * u).clamp(lo, hi)))
        .collect()
}

/// u ↦ t·P(t^(−a)·u): the potential of t·Φ_t^*g, where Φ_t is the time
/// −½·log t flow of X, acting as u ↦ t^(−a)·u. The result lives on the nodes
/// where the rescaled argument stays inside the grid.
pub fn self_similar_pullback(p: &Profile, t: f64, a: f64) -> Result<Pullback> {
    if !(t > 0.0 && a > 0.0) {
        return Err(LabError::Domain(format!("need t > 0 and a > 0, got t = {t}, a = {a}")));
    }
    let sigma = t.powf(-a);
    let (sub, _) = covered(p.grid(), sigma)?;
    let values: Vec<f64> = sample(p, &sub, sigma).into_iter().map(|v| t * v).collect();
    Ok(Pullback {
        u_lo: sub.u_min(),
        u_hi: sub.u_max(),
        coverage: sub.len() as f64 / p.len() as f64,
        profile: Profile::new(sub, values)?,
    })
}

/// Metric with potential `scale`·P(σu): eigenvalues scale·σ·λ(σu), resampled
/// from the eigenvalue profiles themselves rather than re-differentiated.
pub fn pullback_metric(m: &InvariantMetric, sigma: f64, scale: f64) -> Result<PullbackMetric> {
    if !(sigma > 0.0 && scale > 0.0) {
        return Err(LabError::Domain(format!(
            "need sigma > 0 and scale > 0, got sigma = {sigma}, scale = {scale}"
        )));
    }
    let (sub, _) = covered(m.p.grid(), sigma)?;
    let build = |p: &Profile, factor: f64| -> Result<Profile> {
        Profile::new(sub.clone(), sample(p, &sub, sigma).into_iter().map(|v| factor * v).collect())
    };
    let metric = InvariantMetric::from_parts(
        m.n,
        build(&m.p, scale)?,
        build(&m.lam_perp, scale * sigma)?,
        build(&m.lam_rad, scale * sigma)?,
    )?;
    Ok(PullbackMetric {
        u_lo: sub.u_min(),
        u_hi: sub.u_max(),
        coverage: sub.len() as f64 / m.p.len() as f64,
        metric,
    })
}
