use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at node {node} (u = {u:e})")]
    NonFinite { node: usize, u: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: requested [{lo:e}, {hi:e}] outside source [{src_lo:e}, {src_hi:e}]")]
    Range {
        lo: f64,
        hi: f64,
        src_lo: f64,
        src_hi: f64,
    },

    #[error("metric not positive: {component} eigenvalue = {value:e} at node {node} (u = {u:e})")]
    Positivity {
        component: &'static str,
        node: usize,
        u: f64,
        value: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("soliton construction failed: {0}")]
    Construction(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("initial data rejected: {reason}")]
    Rejected {
        reason: String,
        max_admissible_amplitude: Option<f64>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("time stepping failed at tau = {tau}: {reason}")]
    StepFailure {
        tau: f64,
        reason: String,
        /// ψ at the last accepted step, when one exists.
        state_dump: Option<Box<crate::radial::Profile>>,
    },

    #[error("monitor {0} produced a non-finite value")]
    MonitorNaN(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
