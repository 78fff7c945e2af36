use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphon_mfc::cli::{self, CliError, RunOptions, SEED_ENV};

#[derive(Parser)]
#[command(name = "graphon-mfc", version, about = "Graphon mean-field control experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads (default: hardware count). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the config schema, defaults and an example for a task.
    Describe { task: String },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    match Args::parse().command {
        Command::Describe { task } => match cli::describe(&task) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { config, threads, out } => {
            let seed_override = match std::env::var(SEED_ENV) {
                Ok(v) => match cli::parse_seed(&v) {
                    Ok(s) => Some(s),
                    Err(e) => return fail(&e),
                },
                Err(_) => None,
            };
            let opts = RunOptions {
                threads,
                out,
                seed_override,
            };
            match cli::run(&config, &opts) {
                Ok(outcome) => {
                    println!("{}", outcome.dir.display());
                    let code = outcome.exit_code();
                    if code != 0 {
                        eprintln!(
                            "{}",
                            serde_json::json!({
                                "error": "not_converged",
                                "message": "iteration did not reach the tolerance",
                                "exit_code": code,
                                "summary": outcome.manifest.summary,
                            })
                        );
                    }
                    ExitCode::from(code as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}
