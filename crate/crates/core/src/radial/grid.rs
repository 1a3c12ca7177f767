use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stencil::{Stencils, WIDTH};
use crate::error::{LabError, Result};

/// How nodes are distributed between `u_min` and `u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingLaw {
    UniformInLogU,
    UniformInU,
}

/// Mesh in the radial variable u = |z|^2, with precomputed stencils.
#[derive(Debug)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    spacing: SpacingLaw,
    stencils: Stencils,
}

/// Number of nodes on each side treated as boundary-affected.
pub const EDGE: usize = 3;

pub const MIN_NODES: usize = 16;

impl RadialGrid {
    pub fn new(u_min: f64, u_max: f64, n: usize, spacing: SpacingLaw) -> Result<Arc<Self>> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min <= 0.0 || u_max <= u_min {
            return Err(LabError::InvalidGrid(format!(
                "need 0 < u_min < u_max, got u_min = {u_min}, u_max = {u_max}"
            )));
        }
        if n < MIN_NODES {
            return Err(LabError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let last = (n - 1) as f64;
        let mut nodes: Vec<f64> = match spacing {
            SpacingLaw::UniformInLogU => {
                let (a, b) = (u_min.ln(), u_max.ln());
                let h = (b - a) / last;
                (0..n).map(|i| (a + h * i as f64).exp()).collect()
            }
            SpacingLaw::UniformInU => {
                let h = (u_max - u_min) / last;
                (0..n).map(|i| u_min + h * i as f64).collect()
            }
        };
        nodes[0] = u_min;
        nodes[n - 1] = u_max;
        Self::from_nodes(nodes, spacing)
    }

    /// Default mesh: 1024 log-spaced nodes on [1e-3, 1e4].
    pub fn default_grid() -> Arc<Self> {
        Self::new(1e-3, 1e4, 1024, SpacingLaw::UniformInLogU).expect("default grid is valid")
    }

    pub fn from_nodes(nodes: Vec<f64>, spacing: SpacingLaw) -> Result<Arc<Self>> {
        if nodes.len() < MIN_NODES.max(WIDTH) {
            return Err(LabError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] <= 0.0 || nodes.iter().any(|u| !u.is_finite()) {
            return Err(LabError::InvalidGrid("nodes must be finite and positive".into()));
        }
        if let Some(i) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidGrid(format!(
                "nodes not strictly increasing at index {}",
                i + 1
            )));
        }
        let stencils = Stencils::build(&nodes);
        Ok(Arc::new(RadialGrid {
            nodes,
            spacing,
            stencils,
        }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn u(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn u_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn u_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn spacing(&self) -> SpacingLaw {
        self.spacing
    }

    pub fn stencils(&self) -> &Stencils {
        &self.stencils
    }

    /// Index range of nodes whose stencils are fully centred.
    pub fn interior(&self) -> std::ops::Range<usize> {
        EDGE..self.len() - EDGE
    }

    /// Step in log u (meaningful for log-spaced grids).
    pub fn log_step(&self) -> f64 {
        (self.u_max().ln() - self.u_min().ln()) / (self.len() - 1) as f64
    }

    /// Grid with every interval split at its geometric (or arithmetic) midpoint.
    pub fn refined(&self) -> Result<Arc<Self>> {
        let mut nodes = Vec::with_capacity(2 * self.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(match self.spacing {
                SpacingLaw::UniformInLogU => (w[0] * w[1]).sqrt(),
                SpacingLaw::UniformInU => 0.5 * (w[0] + w[1]),
            });
        }
        nodes.push(self.u_max());
        Self::from_nodes(nodes, self.spacing)
    }

    pub fn same_nodes(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other) || self.nodes == other.nodes
    }
}
