//! Command line: `run`, `sweep`, `converge` and `plot`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{RunError, RunResult};
use crate::experiments::run_experiment;
use crate::plots::{emit_plot_scripts, plot_scripts};

/// Overrides `--out` when set.
pub const OUT_ENV: &str = "PGCSIM_OUT";

#[derive(Debug, Parser)]
#[command(name = "pgcsim", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("PGCSIM_GIT_DESCRIBE"), ")"))]
#[command(about = "Public-good contribution experiments: closed forms, Monte Carlo, lattice solver, first-order checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment a config describes.
    Run(RunArgs),
    /// Run a config as a free-rider sweep.
    Sweep(RunArgs),
    /// Run a config as a convergence study.
    Converge(RunArgs),
    /// Write plot scripts for a result CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed, replacing the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory, replacing the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 if any first-order check fails.
    #[arg(long)]
    gate: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Directory for the scripts (default: next to the CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Output directory: the environment, then the flag, then the config.
fn out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map_or_else(|| cfg.output.clone(), Path::to_path_buf),
    }
}

fn stamp(kind: ExperimentKind) -> String {
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    format!("pgcsim {} {} generated {now}", env!("CARGO_PKG_VERSION"), kind.name())
}

/// Runs one experiment and writes its artifacts; returns the files written.
pub fn run(mut cfg: ExperimentConfig, out: &Path, threads: Option<usize>) -> RunResult<Vec<PathBuf>> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(RunError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    cfg.output = out.to_path_buf();
    let result = pool.install(|| run_experiment(&cfg))?;

    std::fs::create_dir_all(out)?;
    let stamp = stamp(cfg.kind);
    let mut written = Vec::new();
    for t in &result.tables {
        t.write(out, &stamp)?;
        written.push(out.join(&t.name));
        if cfg.emit_plots {
            // tables without a matching plot are simply not plotted
            if let Ok(scripts) = plot_scripts(t, &t.name) {
                for s in scripts {
                    std::fs::write(out.join(&s.file_name), &s.body)?;
                    written.push(out.join(&s.file_name));
                }
            }
        }
    }
    for f in &written {
        info!("wrote {}", f.display());
    }
    if cfg.gate && !result.failures.is_empty() {
        return Err(RunError::Verification(result.failures.join("; ")));
    }
    Ok(written)
}

fn run_command(args: RunArgs, force: Option<ExperimentKind>) -> RunResult<Vec<PathBuf>> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(k) = force {
        cfg = cfg.with_kind(k)?;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    cfg.gate |= args.gate;
    let out = out_dir(args.out.as_deref(), &cfg);
    run(cfg, &out, args.threads)
}

fn execute(cli: Cli) -> RunResult<Vec<PathBuf>> {
    match cli.command {
        Command::Run(a) => run_command(a, None),
        Command::Sweep(a) => run_command(a, Some(ExperimentKind::FreeRiderSweep)),
        Command::Converge(a) => run_command(a, Some(ExperimentKind::ConvergenceStudy)),
        Command::Plot(a) => {
            let dir = match a.out {
                Some(d) => d,
                None => a.csv.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
            Ok(emit_plot_scripts(&a.csv, &dir)?.into_iter().map(|s| dir.join(s.file_name)).collect())
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            error!("{e}");
            eprintln!("pgcsim: {e}");
            e.exit_code()
        }
    }
}
