use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coordscope::config::RunConfig;
use coordscope::error::Error;
use coordscope::runner;

const EXIT_CONFIG: u8 = 2;
const EXIT_COMPUTE: u8 = 3;
const EXIT_ASSERTION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "coordscope",
    version,
    about = "Finds the stationary solutions of two-agent differentiable decision problems, \
             classifies when the agents are coordinated, and schedules coordination over time."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline for a config file and write report + CSV artifacts.
    Run {
        /// Path to the TOML run configuration.
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<String>,
        /// Override the restart count from the config.
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Validate analytic gradients and Hessians against finite differences.
    CheckDerivatives {
        /// Path to the TOML run configuration.
        config: PathBuf,
        /// Number of seeded random evaluation points.
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Run a bundled reproduction case: fig1, remark_q, t6, or t10.
    Reproduce {
        /// Case name.
        case: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_)
                | Error::InvalidParameter { .. }
                | Error::Capacity { .. }
                | Error::Io { .. } => EXIT_CONFIG,
                _ => EXIT_COMPUTE,
            })
        }
    }
}

/// COORDSCOPE_THREADS caps the worker count; 0 or unset means automatic.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("COORDSCOPE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            restarts,
        } => {
            let bytes = std::fs::read(&config).map_err(|e| Error::Io {
                path: config.display().to_string(),
                source: e,
            })?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| Error::Config("config file is not UTF-8".into()))?;
            let mut cfg = RunConfig::from_toml_str(&text)?;
            if let Some(s) = seed {
                cfg.search.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output.directory = o;
            }
            if let Some(r) = restarts {
                cfg.search.restarts = r;
            }
            cfg.validate()?;
            let digest = runner::sha256_hex(&bytes);
            let report = runner::run(&cfg, digest)?;
            let out_dir = PathBuf::from(&cfg.output.directory);
            runner::write_artifacts(&report, &out_dir)?;
            println!(
                "run complete: {} solutions, {} classified, plan over {} set(s); artifacts in {}",
                report.search_stats.distinct_solutions,
                report.atlas.records.len(),
                report.instance.family.len(),
                out_dir.display()
            );
            if let Some(w) = &report.instance.warning {
                eprintln!("warning: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckDerivatives { config, points } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::Io {
                path: config.display().to_string(),
                source: e,
            })?;
            let cfg = RunConfig::from_toml_str(&text)?;
            let report = runner::check_derivatives(&cfg, points)?;
            println!(
                "gradient: worst rel err {:e} at point {} coordinate {} (tol {:e})",
                report.worst_gradient.relative_error,
                report.worst_gradient.point_index,
                report.worst_gradient.coordinate,
                report.grad_tolerance
            );
            println!(
                "hessian:  worst rel err {:e} at point {} coordinate {} (tol {:e})",
                report.worst_hessian.relative_error,
                report.worst_hessian.point_index,
                report.worst_hessian.coordinate,
                report.hess_tolerance
            );
            if report.passed {
                println!("check-derivatives: PASS ({})", report.problem);
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("check-derivatives: FAIL ({})", report.problem);
                Ok(ExitCode::from(EXIT_COMPUTE))
            }
        }
        Command::Reproduce { case, out } => {
            let case = runner::ReproCase::parse(&case)?;
            let (report, ok) = runner::reproduce(case, &out)?;
            for a in &report.assertions {
                let status = if a.passed {
                    "pass"
                } else if a.required {
                    "FAIL"
                } else {
                    "deviation"
                };
                println!("[{status}] {}: {}", a.name, a.detail);
            }
            if ok {
                println!("reproduce: all required assertions passed");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("reproduce: required assertion failed");
                Ok(ExitCode::from(EXIT_ASSERTION))
            }
        }
    }
}
