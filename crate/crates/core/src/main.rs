use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use expanderlab::radial::{RadialGrid, SpacingLaw};
use expanderlab::scenario::{exit, log, run_scenario, ScenarioConfig, DEFAULT_SHOOT_TOL};
use expanderlab::soliton::{cao, gaussian, IDENTITY_TOL, NORMALIZATION_TOL, SOLITON_EQ_TOL};
use expanderlab::LabError;

#[derive(Parser)]
#[command(name = "expanderlab", version, about = "Expanding Kähler-Ricci solitons and the normalized flow of their perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `outputs.directory` of a scenario.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 lets the runtime decide).
    #[arg(long, global = true, env = "EXPANDERLAB_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario configuration.
    Run { config: PathBuf },
    /// Build and certify a soliton, printing its residuals.
    VerifySoliton {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        u_min: f64,
        #[arg(long, default_value_t = 1e4)]
        u_max: f64,
        #[arg(long = "nodes", default_value_t = 1024)]
        nodes: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gaussian,
    Cao,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

fn verify(kind: Kind, lambda: Option<f64>, n: usize, u_min: f64, u_max: f64, nodes: usize) -> i32 {
    let grid = match RadialGrid::new(u_min, u_max, nodes, SpacingLaw::UniformInLogU) {
        Ok(g) => g,
        Err(e) => {
            log::error(&e.to_string());
            return exit::CONFIG;
        }
    };
    let built = match kind {
        Kind::Gaussian => gaussian(n, &grid),
        Kind::Cao => match lambda {
            Some(l) => cao(l, n, &grid, DEFAULT_SHOOT_TOL),
            None => {
                log::error("--lambda is required for --kind cao");
                return exit::CONFIG;
            }
        },
    };
    let s = match built {
        Ok(s) => s,
        Err(e @ LabError::Domain(_)) => {
            log::error(&e.to_string());
            return exit::CONFIG;
        }
        Err(e) => {
            log::error(&e.to_string());
            return exit::NUMERICAL;
        }
    };
    let r = s.residuals;
    println!("{:<22} {:>12} {:>12}  status", "residual", "value", "threshold");
    for (name, v, t) in [
        ("soliton_equation", r.soliton_eq_sup, SOLITON_EQ_TOL),
        ("trace_identity", r.identity_sup, IDENTITY_TOL),
        ("normalization", r.normalization_sup, NORMALIZATION_TOL),
    ] {
        println!("{name:<22} {v:>12.3e} {t:>12.1e}  {}", if v <= t { "ok" } else { "FAIL" });
    }
    println!("{:<22} {:>12.6}", "cone_exponent", s.cone_exponent);
    if r.within_thresholds() {
        exit::OK
    } else {
        exit::NUMERICAL
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            return ExitCode::from(code as u8);
        }
    };
    log::set_level(match cli.log_level {
        LogLevel::Error => log::Level::Error,
        LogLevel::Warn => log::Level::Warn,
        LogLevel::Info => log::Level::Info,
        LogLevel::Debug => log::Level::Debug,
    });
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn(&format!("could not configure {t} threads: {e}"));
        }
    }
    let code = match cli.command {
        Command::VerifySoliton { kind, lambda, n, u_min, u_max, nodes } => verify(kind, lambda, n, u_min, u_max, nodes),
        Command::Run { config } => match ScenarioConfig::load(&config) {
            Err(e) => {
                log::error(&e.to_string());
                exit::CONFIG
            }
            Ok(cfg) => {
                let base = config.parent().map(PathBuf::from).unwrap_or_default();
                let out = cli.output_dir.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
                let started = std::time::Instant::now();
                let o = run_scenario(&cfg, &base, &out);
                if o.exit_code == exit::OK {
                    println!("{}", o.message);
                } else {
                    log::error(&o.message);
                }
                log::info(&format!("finished in {:.1} s, outputs in {}", started.elapsed().as_secs_f64(), out.display()));
                o.exit_code
            }
        },
    };
    ExitCode::from(code as u8)
}
