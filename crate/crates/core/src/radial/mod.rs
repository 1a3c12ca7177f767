//! Radial mesh, sampled profiles and their finite-difference calculus.

mod grid;
mod profile;
pub mod stencil;

pub use grid::{RadialGrid, SpacingLaw, EDGE, MIN_NODES};
pub use profile::{resample, weighted_sup_norm, Profile};
pub(crate) use profile::interpolate;


/// Least-squares slope and intercept of y against x, plus r^2.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}
