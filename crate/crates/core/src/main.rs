use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpm::harness::{self, ExperimentConfig};
use fpm::recon::Algorithm;
use fpm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fpm",
    version,
    about = "Fourier ptychography simulation and reconstruction"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic dataset from a config.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory (defaults to `<output_dir>/dataset`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the sample, noise and pupil-error seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run solvers on a dataset directory.
    Reconstruct {
        /// Dataset directory written by `synthesize`.
        dataset: PathBuf,
        /// Solver settings; without it every solver runs with defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset: ap,wfp,pwfp,tpwfp.
        #[arg(long, value_delimiter = ',')]
        solver: Vec<Algorithm>,
    },
    /// Run the config's parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `sweep.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        solver: Vec<Algorithm>,
    },
    /// Print a Markdown summary of a sweep or reconstruction directory.
    Report { dir: PathBuf },
}

fn load(path: &Path, solvers: &[Algorithm]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if !solvers.is_empty() {
        cfg.select_solvers(solvers)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Synthesize { config, out, seed } => {
            let mut cfg = load(&config, &[])?;
            if let Some(s) = seed {
                cfg.sample.seed = s;
                cfg.noise.seed = s;
                cfg.pupil_error.seed = s;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.join("dataset"));
            let syn = harness::synthesize(&cfg, &out)?;
            for w in &syn.meta.warnings {
                eprintln!("warning: {w}");
            }
            println!("dataset written to {}", out.display());
        }
        Command::Reconstruct {
            dataset,
            config,
            out,
            solver,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::desk(),
            };
            if !solver.is_empty() {
                cfg.select_solvers(&solver)?;
            }
            let runs = harness::reconstruct(&dataset, &cfg.solvers, &out)?;
            for r in runs {
                match r.meta.relative_error {
                    Some(re) => println!(
                        "{}: {} iterations, RE {re:.4e}",
                        r.meta.algorithm, r.meta.iterations_run
                    ),
                    None => println!("{}: {} iterations", r.meta.algorithm, r.meta.iterations_run),
                }
            }
        }
        Command::Sweep {
            config,
            out,
            seed,
            solver,
        } => {
            let mut cfg = load(&config, &solver)?;
            if let (Some(s), Some(sw)) = (seed, cfg.sweep.as_mut()) {
                sw.base_seed = s;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.join("sweep"));
            let outcome = harness::sweep(&cfg, Some(&out))?;
            let failed = outcome.cells.iter().filter(|c| c.re.is_err()).count();
            if failed > 0 {
                eprintln!("warning: {failed} solver runs failed; see cells.csv");
            }
            print!("{}", harness::report(&out)?);
        }
        Command::Report { dir } => print!("{}", harness::report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
