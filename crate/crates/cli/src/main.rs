//! `nmqbm`: scenario runs, mask sweeps, kernel checks and refits.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmqbm::kernels::OrderStatus;
use nmqbm::scenario::{self, ScenarioConfig, DEFAULT_CONFIG};
use nmqbm::{Error, MaskMode};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_KERNEL_FAIL: u8 = 4;
const EXIT_KERNEL_INCONCLUSIVE: u8 = 5;

#[derive(Parser)]
#[command(name = "nmqbm", version, about = "Non-Markovian quantum Brownian motion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled proton scenario when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, replaces `out_dir` of the scenario.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Concurrent sweep entries.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Grid points per axis.
    #[arg(long, value_name = "N")]
    grid_n: Option<usize>,
    /// Final time in units of 1/gamma.
    #[arg(long, value_name = "TAU")]
    tau_end: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Component,
    Band,
}

#[derive(Subcommand)]
enum Command {
    /// Run every R_Omega of the sweep and write the artifact tree.
    Run(Common),
    /// Fit every R_Omega at each mask width of the mask sweep.
    MaskSweep(Common),
    /// Check the truncation order of the kernel expansion.
    VerifyKernels(Common),
    /// Re-fit an existing coherence.csv.
    Fit {
        /// Path to a coherence.csv.
        csv: PathBuf,
        /// Directory for fit.json and fit_overlay.csv; defaults to the CSV's directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "component")]
        mode: ModeArg,
    },
    /// Print the bundled scenario file.
    DefaultConfig,
}

fn load(c: &Common) -> Result<ScenarioConfig, Error> {
    let cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::from_toml(DEFAULT_CONFIG)?,
    };
    cfg.with_overrides(c.out.clone(), c.grid_n, c.tau_end)
}

fn workers(c: &Common) -> usize {
    c.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Domain(_) => EXIT_CONFIG,
        Error::BlowUp { .. } | Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
    }
}

fn run(c: &Common) -> Result<u8, Error> {
    let cfg = load(c)?;
    let out = scenario::run_scenario(&cfg, workers(c))?;
    let mut code = 0;
    for e in &out.entries {
        let m = &e.manifest;
        let fit = match &e.fit {
            Some(f) => format!(
                "{} tau_D={} ({:?})",
                f.classification.as_str(),
                f.tau_d.map_or("inf".into(), |t| format!("{t:.4e}")),
                f.flag
            ),
            None => format!("not fitted: {}", m.fit_error.as_deref().unwrap_or("")),
        };
        println!(
            "R_Omega={:<6} state={:?} coherence={:?} {fit}",
            e.r_omega, m.state_run.status, m.coherence_run.status
        );
        for (what, flag) in [("state", m.state_run.boundary_flag), ("coherence", m.coherence_run.boundary_flag)] {
            if let Some(t) = flag {
                println!("  warning: {what} run reached the domain edge at tau={t}");
            }
        }
        if e.terminated() || (e.fit.is_none() && e.series.len() > 1) {
            code = EXIT_NUMERICAL;
        }
    }
    println!("summary: {}", out.summary_path.display());
    Ok(code)
}

fn mask_sweep(c: &Common) -> Result<u8, Error> {
    let cfg = load(c)?;
    let out = scenario::mask_sweep(&cfg, workers(c))?;
    for r in &out.rows {
        println!(
            "R_Omega={:<6} w={:.3}*sep status={:?} {}",
            r.r_omega,
            r.w_fraction,
            r.status,
            r.fit.as_ref().map_or("not fitted", |f| f.classification.as_str())
        );
    }
    for (r, stable) in out.stability() {
        println!("R_Omega={r}: classification {}", if stable { "stable" } else { "CHANGES with mask" });
    }
    println!("summary: {}", out.summary_path.display());
    Ok(if out.any_terminated() { EXIT_NUMERICAL } else { 0 })
}

fn verify(c: &Common) -> Result<u8, Error> {
    let cfg = load(c)?;
    let v = scenario::verify_kernels(&cfg)?;
    println!("{}", v.line());
    println!("csv: {}", v.main_csv.display());
    Ok(match v.status() {
        OrderStatus::Pass => 0,
        OrderStatus::Fail => EXIT_KERNEL_FAIL,
        OrderStatus::FloorLimited => EXIT_KERNEL_INCONCLUSIVE,
    })
}

fn fit(csv: &Path, out: Option<&Path>, mode: ModeArg) -> Result<u8, Error> {
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    let mode = match mode {
        ModeArg::Component => MaskMode::Component,
        ModeArg::Band => MaskMode::Band,
    };
    let f = scenario::refit(csv, mode, &dir)?;
    let p = f.params;
    println!(
        "A={:.6e} alpha={:.6} B={:.6e} beta={:.6} class={} tau_D={} rms={:.3e}",
        p.a,
        p.alpha,
        p.b,
        p.beta,
        f.classification.as_str(),
        f.tau_d.map_or("inf".into(), |t| format!("{t:.6e}")),
        f.rms
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::MaskSweep(c) => mask_sweep(c),
        Command::VerifyKernels(c) => verify(c),
        Command::Fit { csv, out, mode } => fit(csv, out.as_deref(), *mode),
        Command::DefaultConfig => {
            print!("{DEFAULT_CONFIG}");
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
