use clap::{Parser, Subcommand};
use flandau_core::config::{parse_schedule, RunConfig};
use flandau_core::diagnostics::RecordOptions;
use flandau_core::integrator::{limit_sweep, run};
use flandau_core::io::{write_run_outputs, write_sweep_report};
use flandau_core::verify::{run_suite, Suite};
use flandau_core::{Error, ErrorCategory};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "flandau", version, about = "Fuzzy Landau equation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write diagnostics.csv, run.json and snapshots.
    Run { config: PathBuf },
    /// Run a property suite and print one PASS/FAIL line per check.
    Verify { suite: String, config: PathBuf },
    /// Run the (delta, epsilon, tau) limit chain and write sweep_report.csv.
    Sweep { config: PathBuf, schedule: PathBuf },
}

const EXIT_CHECKS_FAILED: u8 = 1;

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Numerical => 3,
        ErrorCategory::Io => 4,
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn output_dir(cfg: &RunConfig, base: &Path) -> PathBuf {
    if cfg.output.dir.is_relative() {
        base.join(&cfg.output.dir)
    } else {
        cfg.output.dir.clone()
    }
}

fn load(config: &Path) -> flandau_core::Result<RunConfig> {
    let cfg = RunConfig::load(config)?;
    // A second global pool cannot be installed; that only happens in-process, never from the CLI.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    Ok(cfg)
}

fn cmd_run(config: &Path) -> flandau_core::Result<u8> {
    let cfg = load(config)?;
    let base = base_dir(config);
    let f = cfg.initial_field(&base)?;
    let traj = run(&cfg.scheme, &cfg.model, &f, RecordOptions::default())?;
    let dir = output_dir(&cfg, &base);
    write_run_outputs(&dir, &cfg, &traj)?;
    if traj.negativity_flags > 0 {
        eprintln!("warning: {} frames flagged for negativity", traj.negativity_flags);
    }
    println!("wrote {} frames to {}", traj.frames.len(), dir.display());
    Ok(0)
}

fn cmd_verify(suite: &str, config: &Path) -> flandau_core::Result<u8> {
    let suite: Suite = suite.parse()?;
    let cfg = load(config)?;
    let report = run_suite(suite, &cfg, &base_dir(config))?;
    for c in &report.checks {
        println!("{c}");
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    println!("{}: {} checks, {} failed", suite.name(), report.checks.len(), failed);
    Ok(if report.all_pass() { 0 } else { EXIT_CHECKS_FAILED })
}

fn cmd_sweep(config: &Path, schedule: &Path) -> flandau_core::Result<u8> {
    let cfg = load(config)?;
    let text = std::fs::read_to_string(schedule)
        .map_err(|e| Error::Config(format!("cannot read schedule {}: {e}", schedule.display())))?;
    let rows = parse_schedule(&text)?;
    let base = base_dir(config);
    let f = cfg.initial_field(&base)?;
    let report = limit_sweep(&cfg.scheme, &cfg.model, &f, &rows)?;
    let dir = output_dir(&cfg, &base);
    write_sweep_report(&dir, &report)?;
    if let Some(e) = &report.error {
        eprintln!("sweep stopped early: {e}");
    }
    println!(
        "wrote {} entries to {}; Cauchy differences {}",
        report.entries.len(),
        dir.join("sweep_report.csv").display(),
        if report.monotone { "monotone" } else { "not monotone" }
    );
    Ok(if report.error.is_some() { 3 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Verify { suite, config } => cmd_verify(suite, config),
        Command::Sweep { config, schedule } => cmd_sweep(config, schedule),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
