use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dissipath::commands::{self, Exit, Outcome};
use rayon::prelude::*;
use serde_json::json;

/// Dissipativity-preserving reduction of dynamics onto charts and monotone trees.
#[derive(Parser)]
#[command(name = "dissipath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Statically check a scenario config (exit 2 on failure).
    Validate { config: PathBuf },
    /// Integrate one or more scenarios and write trajectory and audit files.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory; with several configs each gets a subdirectory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios integrated in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank-one and kernel-tilt counterexamples for a config.
    Counterexample { config: PathBuf },
    /// List catalog ids.
    Catalog,
    /// Print the config JSON schemas, or write them into a directory.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Prints a JSON document; a closed stdout is not an error.
fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn emit(outcome: &Outcome) {
    print_json(&outcome.report);
}

fn run_batch(configs: &[PathBuf], out: Option<PathBuf>, jobs: usize) -> Exit {
    if configs.len() == 1 {
        let o = commands::run(&configs[0], out.as_deref());
        emit(&o);
        return o.exit;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return Exit::Io;
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let stem = cfg
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let dir = out.as_ref().map(|d| d.join(&stem));
                commands::run(cfg, dir.as_deref())
            })
            .collect()
    });
    let reports: Vec<_> = configs
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| json!({ "config": c.display().to_string(), "exit": o.exit as i32, "report": o.report }))
        .collect();
    print_json(&json!(reports));
    outcomes.iter().map(|o| o.exit).max().unwrap_or(Exit::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DISSIPATH_LOG", "error")).init();
    let cli = Cli::parse();
    let exit = match cli.command {
        Command::Validate { config } => {
            let o = commands::validate(&config);
            emit(&o);
            o.exit
        }
        Command::Run { configs, out, jobs } => run_batch(&configs, out, jobs),
        Command::Counterexample { config } => {
            let o = commands::counterexample(&config);
            emit(&o);
            o.exit
        }
        Command::Catalog => {
            print_json(&commands::catalog_listing());
            Exit::Ok
        }
        Command::Schema { out } => commands::schema(out.as_deref()),
    };
    ExitCode::from(exit as u8)
}
