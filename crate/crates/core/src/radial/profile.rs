use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::grid::{RadialGrid, EDGE};
use super::stencil::WIDTH;
use crate::error::{LabError, Result};
use crate::io::atomic_write;

/// A scalar function of u sampled at the nodes of a grid.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

fn first_non_finite(grid: &RadialGrid, values: &[f64]) -> Option<LabError> {
    values
        .iter()
        .position(|v| !v.is_finite())
        .map(|node| LabError::NonFinite {
            node,
            u: grid.u(node),
        })
}

impl Profile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(e) = first_non_finite(&grid, &values) {
            return Err(e);
        }
        Ok(Profile { grid, values })
    }

    /// Builds a profile without the finiteness check. Downstream operations
    /// still detect non-finite entries.
    pub(crate) fn raw(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Profile { grid, values }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&u| f(u)).collect();
        Profile {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &Arc<RadialGrid>, c: f64) -> Self {
        Profile {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn check_finite(&self) -> Result<()> {
        match first_non_finite(&self.grid, &self.values) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Profile) -> bool {
        self.grid.same_nodes(&other.grid)
    }

    pub(crate) fn ensure_same_grid(&self, other: &Profile) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(LabError::GridMismatch("profiles live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Profile {
        Profile::raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise map that also sees the node coordinate.
    pub fn map_u(&self, f: impl Fn(f64, f64) -> f64) -> Profile {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&u, &v)| f(u, v))
            .collect();
        Profile::raw(self.grid.clone(), values)
    }

    pub fn zip(&self, other: &Profile, f: impl Fn(f64, f64) -> f64) -> Profile {
        debug_assert!(self.same_grid(other));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Profile::raw(self.grid.clone(), values)
    }

    pub fn add(&self, other: &Profile) -> Profile {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Profile) -> Profile {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Profile) -> Profile {
        self.zip(other, |a, b| a * b)
    }

    pub fn div(&self, other: &Profile) -> Profile {
        self.zip(other, |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> Profile {
        self.map(|v| c * v)
    }

    /// d^k p / du^k, k in {1, 2}, by seven-point stencils on the actual nodes.
    pub fn derivative(&self, order: u8) -> Result<Profile> {
        if !(1..=2).contains(&order) {
            return Err(LabError::Domain(format!(
                "derivative order must be 1 or 2, got {order}"
            )));
        }
        if self.grid.len() < WIDTH {
            return Err(LabError::InvalidGrid(format!(
                "need at least {WIDTH} nodes to differentiate"
            )));
        }
        self.check_finite()?;
        let st = self.grid.stencils();
        let values = (0..self.len())
            .map(|i| st.apply(order as usize, &self.values, i))
            .collect();
        Ok(Profile::raw(self.grid.clone(), values))
    }

    /// u * p'(u), the derivative with respect to log u.
    pub fn log_derivative(&self) -> Result<Profile> {
        Ok(self.derivative(1)?.map_u(|u, d| u * d))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values[EDGE..self.len() - EDGE]
    }

    pub fn interior_sup_abs(&self) -> f64 {
        self.interior_values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Two-column CSV with header `u,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(48 * (self.len() + 1));
        s.push_str("u,value\n");
        for (u, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{u:.16e},{v:.16e}");
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }

    /// Parses a profile written by [`Profile::to_csv`] back onto `grid`.
    pub fn from_csv(text: &str, grid: &Arc<RadialGrid>) -> Result<Profile> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "u,value" => {}
            other => {
                return Err(LabError::Parse(format!(
                    "expected header 'u,value', found {other:?}"
                )))
            }
        }
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            let (u, v) = line
                .split_once(',')
                .ok_or_else(|| LabError::Parse(format!("line {}: missing comma", k + 2)))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Parse(format!("line {}: {e}", k + 2)))
            };
            let (u, v) = (parse(u)?, parse(v)?);
            if k >= grid.len() || (u - grid.u(k)).abs() > 1e-14 * grid.u(k) {
                return Err(LabError::GridMismatch(format!(
                    "line {}: node u = {u:e} does not match the grid",
                    k + 2
                )));
            }
            values.push(v);
        }
        Profile::new(grid.clone(), values)
    }
}

/// sup over interior nodes of |p| * f_ref^w.
pub fn weighted_sup_norm(p: &Profile, weight_exponent: f64, f_ref: &Profile) -> Result<f64> {
    p.ensure_same_grid(f_ref)?;
    if let Some(i) = f_ref.values().iter().position(|&f| !(f > 0.0)) {
        return Err(LabError::Domain(format!(
            "weight profile must be positive, found {} at node {i}",
            f_ref.at(i)
        )));
    }
    let n = p.len();
    let mut m: f64 = 0.0;
    for i in EDGE..n - EDGE {
        m = m.max(p.at(i).abs() * f_ref.at(i).powf(weight_exponent));
    }
    Ok(m)
}

/// Interpolates `p` onto `target` (local polynomial in u, exact at shared nodes).
pub fn resample(p: &Profile, target: &Arc<RadialGrid>) -> Result<Profile> {
    let src = p.grid();
    if src.same_nodes(target) {
        return Ok(Profile::raw(target.clone(), p.values().to_vec()));
    }
    let (lo, hi) = (src.u_min(), src.u_max());
    let slack = 1e-13;
    if target.u_min() < lo * (1.0 - slack) || target.u_max() > hi * (1.0 + slack) {
        return Err(LabError::Range {
            lo: target.u_min(),
            hi: target.u_max(),
            src_lo: lo,
            src_hi: hi,
        });
    }
    let values = target
        .nodes()
        .iter()
        .map(|&x| interpolate(src.nodes(), p.values(), x.clamp(lo, hi)))
        .collect();
    Profile::new(target.clone(), values)
}

const INTERP_POINTS: usize = 6;

/// Evaluates the local six-node Lagrange interpolant of (xs, ys) at x, with x
/// inside [xs[0], xs[last]]. Cubics (indeed quintics) are reproduced exactly.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let j = xs.partition_point(|&v| v <= x);
    if j > 0 && xs[j - 1] == x {
        return ys[j - 1];
    }
    let j = j.saturating_sub(1);
    let s = j.saturating_sub(INTERP_POINTS / 2 - 1).min(n - INTERP_POINTS);
    let mut acc = 0.0;
    for a in s..s + INTERP_POINTS {
        let mut w = 1.0;
        for b in s..s + INTERP_POINTS {
            if a != b {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        acc += w * ys[a];
    }
    acc
}
