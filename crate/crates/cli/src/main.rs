use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trajcomplete_cli::{catalog, run_batch, validate_files, CliError, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "trajcomplete", version, about = "Completeness of accelerated trajectories and plane-wave geodesics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run scenario files or directories of them.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(short, long, default_value = "out")]
        output_dir: PathBuf,
        /// Scenarios run concurrently, each in its own output directory.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
        /// Also write the resolved scenario next to its report.
        #[arg(long)]
        echo_config: bool,
        #[arg(long)]
        tol_rel: Option<f64>,
        #[arg(long)]
        tol_abs: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Override a scenario key, e.g. `--set integrator.max_step=0.01`.
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List built-in manifolds, potentials, tensors and wave families.
    Catalog,
    /// Parse and validate scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            print!("{}", catalog::list_catalog());
            ExitCode::SUCCESS
        }
        Command::Validate { scenarios, overrides } => {
            let results = match validate_files(&scenarios, &overrides) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let mut status = ExitCode::SUCCESS;
            for (path, r) in results {
                match r {
                    Ok(what) => println!("ok {}: {what}", path.display()),
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        status = ExitCode::from(e.exit_code() as u8);
                    }
                }
            }
            status
        }
        Command::Run {
            scenarios,
            output_dir,
            jobs,
            echo_config,
            tol_rel,
            tol_abs,
            horizon,
            mut overrides,
        } => {
            for (key, v) in [("rel_tol", tol_rel), ("abs_tol", tol_abs), ("horizon", horizon)] {
                if let Some(v) = v {
                    overrides.push(format!("integrator.{key}={v:e}"));
                }
            }
            let opts = RunOptions {
                output_dir,
                overrides,
                echo_config,
                jobs,
            };
            let results = match run_batch(&scenarios, &opts) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let mut status = ExitCode::SUCCESS;
            for r in results {
                match r {
                    Ok(s) => {
                        let outcome = s.report.get("outcome").and_then(|v| v.as_str()).unwrap_or("-");
                        println!("{}: {outcome} -> {}", s.name, s.dir.display());
                        eprintln!("{}: {:.3} s", s.name, s.elapsed.as_secs_f64());
                    }
                    Err(e) => status = fail(&e),
                }
            }
            status
        }
    }
}
