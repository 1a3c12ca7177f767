//! Numerical laboratory for U(n)-invariant gradient Kähler–Ricci expanders
//! and the normalized Kähler–Ricci flow of their perturbations, reduced to a
//! scalar parabolic Monge–Ampère equation in the radial variable u = |z|².

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod perturbations;
pub mod radial;
pub mod scenario;
pub mod soliton;

pub use error::{LabError, Result};
