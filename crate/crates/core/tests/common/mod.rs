#![allow(dead_code)]

pub mod oracle;

use std::sync::Arc;

use expanderlab::radial::{RadialGrid, SpacingLaw};

pub fn log_grid(u_min: f64, u_max: f64, n: usize) -> Arc<RadialGrid> {
    RadialGrid::new(u_min, u_max, n, SpacingLaw::UniformInLogU).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Index of the node closest to u.
pub fn node_near(grid: &RadialGrid, u: f64) -> usize {
    let nodes = grid.nodes();
    (0..nodes.len())
        .min_by(|&i, &j| {
            (nodes[i].ln() - u.ln())
                .abs()
                .partial_cmp(&(nodes[j].ln() - u.ln()).abs())
                .unwrap()
        })
        .unwrap()
}
