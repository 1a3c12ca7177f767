//! Declarative scenarios: a strict JSON configuration drives soliton
//! construction, initial data, condition checks, the flow and diagnostics,
//! and every artifact lands in one output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsReport, Monitor, Recorder, DEFAULT_FIT_WINDOW};
use crate::error::{LabError, Result};
use crate::flow::{run, FlowState, RunStatus, StepControl};
use crate::io::{atomic_write, write_json};
use crate::perturbations::{
    check_condition, make_asymptotically_linear, make_compact_bump, make_custom, make_linear_in_f, Condition,
    ConditionReport, InitialData, Status,
};
use crate::radial::{Profile, RadialGrid, SpacingLaw};
use crate::soliton::{cao, gaussian, SolitonData};

/// Process exit codes of the scenario runner.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const BOUND_VIOLATED: i32 = 2;
    pub const CONDITION_FAILED: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

pub const DEFAULT_SAMPLE_CADENCE: f64 = 0.25;
pub const DEFAULT_SHOOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub soliton: SolitonConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub perturbation: PerturbationConfig,
    pub flow: FlowConfig,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SolitonConfig {
    Gaussian {
        n: usize,
    },
    Cao {
        n: usize,
        lambda: f64,
        #[serde(default = "default_shoot_tol")]
        shoot_tol: f64,
    },
}

fn default_shoot_tol() -> f64 {
    DEFAULT_SHOOT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub u_min: f64,
    pub u_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub spacing_law: SpacingLaw,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            u_min: 1e-3,
            u_max: 1e4,
            n: 1024,
            spacing_law: SpacingLaw::UniformInLogU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", content = "params", rename_all = "snake_case")]
pub enum PerturbationConfig {
    LinearInF(LinearParams),
    CompactBump(BumpParams),
    AsymptoticallyLinear(AsymptoticParams),
    /// ψ₀ read from a two-column `u,value` CSV on the scenario grid. A relative
    /// path is taken relative to the configuration file.
    Custom(CustomParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    pub center_u: f64,
    pub width_decades: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticParams {
    pub kappa: f64,
    pub onset_u: f64,
    pub width_decades: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomParams {
    pub label: String,
    pub csv: PathBuf,
}

/// `tau_end` plus the step-control fields, each optional with the documented
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub tau_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_tol: Option<f64>,
}

impl FlowConfig {
    pub fn control(&self) -> StepControl {
        let d = StepControl::default();
        StepControl {
            dt_init: self.dt_init.unwrap_or(d.dt_init),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            dt_max: self.dt_max.unwrap_or(d.dt_max),
            newton_tol: self.newton_tol.unwrap_or(d.newton_tol),
            newton_max_iter: self.newton_max_iter.unwrap_or(d.newton_max_iter),
            safety: self.safety.unwrap_or(d.safety),
            local_tol: self.local_tol.unwrap_or(d.local_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub checkpoint_cadence_tau: f64,
    /// Monitor names; all monitors when absent.
    #[serde(default)]
    pub monitors: Option<Vec<String>>,
    #[serde(default = "default_cadence")]
    pub sample_cadence_tau: f64,
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
}

fn default_cadence() -> f64 {
    DEFAULT_SAMPLE_CADENCE
}

fn default_fit_window() -> (f64, f64) {
    DEFAULT_FIT_WINDOW
}

impl ScenarioConfig {
    /// Parses and validates. Messages carry the line and column of schema errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(LabError::Config(format!("{field}: {msg}")));
        match self.soliton {
            SolitonConfig::Gaussian { n } | SolitonConfig::Cao { n, .. } if n < 2 => {
                return bad("soliton.n", format!("complex dimension must be >= 2, got {n}"));
            }
            SolitonConfig::Cao { lambda, .. } if !(lambda > 1.0 && lambda.is_finite()) => {
                return bad("soliton.lambda", format!("must be finite and > 1, got {lambda}"));
            }
            _ => {}
        }
        let g = &self.grid;
        if !(g.u_min > 0.0 && g.u_max > g.u_min && g.u_max.is_finite()) {
            return bad("grid", format!("need 0 < u_min < u_max, got [{}, {}]", g.u_min, g.u_max));
        }
        if !(self.flow.tau_end > 0.0 && self.flow.tau_end.is_finite()) {
            return bad("flow.tau_end", format!("must be positive, got {}", self.flow.tau_end));
        }
        self.flow
            .control()
            .validate()
            .map_err(|e| LabError::Config(format!("flow: {e}")))?;
        let o = &self.outputs;
        if !(o.checkpoint_cadence_tau > 0.0) {
            return bad("outputs.checkpoint_cadence_tau", format!("must be positive, got {}", o.checkpoint_cadence_tau));
        }
        if !(o.sample_cadence_tau > 0.0) {
            return bad("outputs.sample_cadence_tau", format!("must be positive, got {}", o.sample_cadence_tau));
        }
        if !(o.fit_window.0 < o.fit_window.1) {
            return bad("outputs.fit_window", format!("empty window {:?}", o.fit_window));
        }
        self.monitors()?;
        Ok(())
    }

    pub fn monitors(&self) -> Result<Vec<Monitor>> {
        match &self.outputs.monitors {
            None => Ok(Monitor::ALL.to_vec()),
            Some(names) if names.is_empty() => Err(LabError::Config("outputs.monitors: empty list".into())),
            Some(names) => names
                .iter()
                .map(|n| {
                    Monitor::from_name(n).ok_or_else(|| {
                        let known: Vec<&str> = Monitor::ALL.iter().map(|m| m.name()).collect();
                        LabError::Config(format!("outputs.monitors: unknown monitor {n:?}; known: {}", known.join(", ")))
                    })
                })
                .collect(),
        }
    }
}

/// How a scenario ended.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_status: Option<RunStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_tau: Option<f64>,
    /// Names of the non-advisory monitors whose predicted bound failed.
    pub failed_verdicts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian_ok: Option<bool>,
}

impl Outcome {
    fn early(exit_code: i32, message: String) -> Self {
        Outcome {
            exit_code,
            message,
            run_status: None,
            final_tau: None,
            failed_verdicts: Vec::new(),
            hamiltonian_ok: None,
        }
    }
}

fn numerical(e: LabError) -> Outcome {
    let code = match e {
        LabError::Config(_) | LabError::Io { .. } => exit::CONFIG,
        _ => exit::NUMERICAL,
    };
    Outcome::early(code, e.to_string())
}

fn build_soliton(cfg: &SolitonConfig, grid: &Arc<RadialGrid>) -> std::result::Result<SolitonData, Outcome> {
    let built = match *cfg {
        SolitonConfig::Gaussian { n } => gaussian(n, grid),
        SolitonConfig::Cao { n, lambda, shoot_tol } => cao(lambda, n, grid, shoot_tol),
    };
    let s = built.map_err(|e| match e {
        LabError::Domain(_) | LabError::InvalidGrid(_) => Outcome::early(exit::CONFIG, e.to_string()),
        other => numerical(other),
    })?;
    if !s.residuals.within_thresholds() {
        return Err(Outcome::early(
            exit::NUMERICAL,
            format!("soliton certification failed: {:?}", s.residuals),
        ));
    }
    Ok(s)
}

fn build_data(cfg: &PerturbationConfig, s: &SolitonData, base: &Path) -> std::result::Result<InitialData, Outcome> {
    let made = match cfg {
        PerturbationConfig::LinearInF(p) => make_linear_in_f(s, p.alpha),
        PerturbationConfig::CompactBump(p) => make_compact_bump(s, p.center_u, p.width_decades, p.amplitude),
        PerturbationConfig::AsymptoticallyLinear(p) => make_asymptotically_linear(s, p.kappa, p.onset_u, p.width_decades),
        PerturbationConfig::Custom(p) => {
            let path = base.join(&p.csv);
            std::fs::read_to_string(&path)
                .map_err(|e| LabError::io(&path, e))
                .and_then(|text| Profile::from_csv(&text, s.grid()))
                .and_then(|psi| make_custom(s, psi, p.label.clone()))
        }
    };
    made.map_err(|e| match e {
        LabError::Rejected { .. } => Outcome::early(exit::CONDITION_FAILED, e.to_string()),
        LabError::Domain(_) | LabError::Parse(_) | LabError::GridMismatch(_) | LabError::Io { .. } => {
            Outcome::early(exit::CONFIG, e.to_string())
        }
        other => numerical(other),
    })
}

#[derive(Serialize)]
struct ConditionFile<'a> {
    condition_i: &'a ConditionReport,
    condition_ii: &'a ConditionReport,
}

/// Runs one scenario. `config_dir` resolves relative paths inside the
/// configuration; `out` is the output directory.
pub fn run_scenario(cfg: &ScenarioConfig, config_dir: &Path, out: &Path) -> Outcome {
    let outcome = execute(cfg, config_dir, out);
    let mut outcome = match outcome {
        Ok(o) | Err(o) => o,
    };
    if let Err(e) = write_json(out.join("summary.json"), &outcome) {
        if outcome.exit_code == exit::OK {
            outcome = Outcome::early(exit::CONFIG, e.to_string());
        }
    }
    outcome
}

fn execute(cfg: &ScenarioConfig, config_dir: &Path, out: &Path) -> std::result::Result<Outcome, Outcome> {
    cfg.validate().map_err(numerical)?;
    let monitors = cfg.monitors().map_err(numerical)?;
    write_json(out.join("config.json"), cfg).map_err(numerical)?;

    let g = &cfg.grid;
    let grid = RadialGrid::new(g.u_min, g.u_max, g.n, g.spacing_law)
        .map_err(|e| Outcome::early(exit::CONFIG, e.to_string()))?;
    let soliton = Arc::new(build_soliton(&cfg.soliton, &grid)?);
    soliton.write_bundle(out, "soliton").map_err(numerical)?;
    log::info(&format!("soliton certified: {:?}", soliton.residuals));

    let data = build_data(&cfg.perturbation, &soliton, config_dir)?;
    data.psi0.write_csv(out.join("psi0.csv")).map_err(numerical)?;
    let c1 = check_condition(&data, &soliton, Condition::I).map_err(numerical)?;
    let c2 = check_condition(&data, &soliton, Condition::II).map_err(numerical)?;
    write_json(out.join("conditions.json"), &ConditionFile { condition_i: &c1, condition_ii: &c2 }).map_err(numerical)?;
    for r in [&c1, &c2] {
        if r.status == Status::Fail {
            let failed: Vec<&str> = r
                .witnesses
                .iter()
                .filter(|w| w.status == Status::Fail)
                .map(|w| w.clause.as_str())
                .collect();
            return Err(Outcome::early(
                exit::CONDITION_FAILED,
                format!("condition {:?} fails: {}", r.condition, failed.join(", ")),
            ));
        }
        if r.status == Status::Inconclusive {
            log::warn(&format!("condition {:?} is inconclusive on this grid", r.condition));
        }
    }

    let ctl = cfg.flow.control();
    let o = &cfg.outputs;
    let state0 = FlowState::new(soliton, data.psi0, &ctl).map_err(numerical)?;
    let mut recorder = Recorder::new(&monitors).with_hamiltonian_residual(ctl.newton_tol);
    let ckpt_dir = out.join("checkpoints");
    let cc = o.checkpoint_cadence_tau;
    let mut next_ckpt = 0.0f64;
    let mut record = |s: &FlowState| recorder.record(s);
    let mut checkpoint = |s: &FlowState| -> Result<()> {
        if s.tau >= next_ckpt - 1e-9 * cc {
            s.write_checkpoint(&ckpt_dir, &format!("psi_tau_{:08.3}", s.tau))?;
            next_ckpt = ((s.tau / cc + 1e-9).floor() + 1.0) * cc;
            log::debug(&format!("checkpoint at tau = {}", s.tau));
        }
        Ok(())
    };
    let (end, runlog) = run(state0, &ctl, cfg.flow.tau_end, o.sample_cadence_tau, &mut [&mut record, &mut checkpoint])
        .map_err(numerical)?;
    end.write_checkpoint(&ckpt_dir, "psi_final").map_err(numerical)?;
    atomic_write(out.join("run_log.csv"), runlog.to_csv().as_bytes()).map_err(numerical)?;

    let report: DiagnosticsReport = recorder.finish(o.fit_window);
    report.write(out, "diagnostics").map_err(numerical)?;

    let failed: Vec<String> = report
        .verdicts
        .iter()
        .filter(|v| !v.advisory && !v.bound_satisfied)
        .map(|v| v.monitor.clone())
        .collect();
    let ham = report.hamiltonian.as_ref().map(|h| h.satisfied());
    let ok = report.all_bounds_hold();
    let message = if ok {
        "all predicted bounds hold".to_string()
    } else if failed.is_empty() {
        "Hamiltonian evolution identity violated".to_string()
    } else {
        format!("predicted bounds violated: {}", failed.join(", "))
    };
    Ok(Outcome {
        exit_code: if ok { exit::OK } else { exit::BOUND_VIOLATED },
        message,
        run_status: Some(runlog.status),
        final_tau: Some(end.tau),
        failed_verdicts: failed,
        hamiltonian_ok: ham,
    })
}

/// Minimal leveled logging to stderr.
pub mod log {
    use std::sync::atomic::{AtomicU8, Ordering};

    #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    pub enum Level {
        Error = 0,
        Warn = 1,
        Info = 2,
        Debug = 3,
    }

    static LEVEL: AtomicU8 = AtomicU8::new(Level::Warn as u8);

    pub fn set_level(l: Level) {
        LEVEL.store(l as u8, Ordering::Relaxed);
    }

    fn emit(l: Level, tag: &str, msg: &str) {
        if l as u8 <= LEVEL.load(Ordering::Relaxed) {
            eprintln!("[{tag}] {msg}");
        }
    }

    pub fn error(msg: &str) {
        emit(Level::Error, "error", msg)
    }
    pub fn warn(msg: &str) {
        emit(Level::Warn, "warn", msg)
    }
    pub fn info(msg: &str) {
        emit(Level::Info, "info", msg)
    }
    pub fn debug(msg: &str) {
        emit(Level::Debug, "debug", msg)
    }
}
