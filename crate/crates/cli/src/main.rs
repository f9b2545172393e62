use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ultrametric_cli::{experiment_infos, run_config, ExperimentConfig, SCHEMA_JSON};

#[derive(Parser)]
#[command(
    name = "ultrametric",
    version,
    about = "Finite-model experiments for heat semigroups and path measures over the p-adic numbers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write CSV/JSON artifacts.
    Run {
        /// Path of the JSON config (see `ultrametric schema`).
        #[arg(long)]
        config: PathBuf,
        /// Exit with code 1 when any assertion fails.
        #[arg(long)]
        strict: bool,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiments, the config keys they read, and their artifacts.
    List {
        /// Emit the catalogue as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the JSON schema configs are validated against.
    Schema,
}

fn main() -> ExitCode {
    // Die silently on a closed pipe (`ultrametric list | head`) instead of
    // panicking; Rust ignores SIGPIPE by default, which turns EPIPE into a
    // panic inside `println!`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match Cli::parse().command {
        Command::Run {
            config,
            strict,
            out,
        } => run_command(&config, strict, out.as_deref()),
        Command::List { json } => list_command(json),
        Command::Schema => {
            println!("{SCHEMA_JSON}");
            ExitCode::SUCCESS
        }
    }
}

fn run_command(config_path: &Path, strict: bool, out: Option<&Path>) -> ExitCode {
    let text = match fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: config violates the schema: {e}");
            return ExitCode::from(2);
        }
    };
    let base_dir = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    match run_config(cfg, &base_dir, out) {
        Ok(outcome) => {
            println!("experiment: {}", outcome.summary.experiment);
            for a in &outcome.summary.assertions {
                println!(
                    "[{}] {} (value {:e}, tolerance {:e})",
                    if a.pass { "PASS" } else { "FAIL" },
                    a.name,
                    a.value,
                    a.tolerance,
                );
            }
            for path in &outcome.csv_files {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", outcome.summary_path.display());
            if strict && !outcome.all_passed() {
                eprintln!("error: strict run with failing assertions");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn list_command(json: bool) -> ExitCode {
    let infos = experiment_infos();
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&infos).expect("static catalogue serializes")
        );
    } else {
        for info in infos {
            println!("{}", info.name);
            println!("  required: {}", info.required.join(", "));
            println!("  optional: {}", info.optional.join(", "));
            if !info.ignored.is_empty() {
                println!("  ignored:  {}", info.ignored.join(", "));
            }
            println!("  files:    {}", info.files.join(", "));
        }
    }
    ExitCode::SUCCESS
}
