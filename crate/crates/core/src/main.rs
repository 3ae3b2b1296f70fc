use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use acfront::config::{RunConfig, Task};
use acfront::pipeline::StageError;
use acfront::run::run;

/// Traveling fronts of the planar Allen-Cahn equation.
#[derive(Parser)]
#[command(name = "acfront", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the double-well conditions of the potential.
    Validate,
    /// Tabulate a one-dimensional profile.
    Profile1d,
    /// Two-layer energy curve and interaction law.
    Energy,
    /// Relax a 2D traveling-wave field.
    Solve,
    /// Level curve and branches of a stored field.
    Levels,
    /// Identities and bounds on a stored field.
    Diagnose,
    /// Integrate the layer-interaction ODE.
    Layerdyn,
    /// End-to-end pipeline with a summary keyed by acceptance criterion.
    Report,
}

impl Command {
    fn task(self) -> Task {
        match self {
            Command::Validate => Task::Validate,
            Command::Profile1d => Task::Profile1d,
            Command::Energy => Task::EnergyCurve,
            Command::Solve => Task::Solve2d,
            Command::Levels => Task::Levelset,
            Command::Diagnose => Task::Diagnose,
            Command::Layerdyn => Task::Layerdyn,
            Command::Report => Task::FullReport,
        }
    }
}

fn write_error(out: &Path, task: Task, err: &StageError) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let record = json!({ "task": task.name(), "stage": err.stage, "error": err.source.to_string() });
    let path = out.join("error.json");
    std::fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = cli.command.task();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("acfront: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let loaded = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let out = cli.out.clone().unwrap_or_else(|| match &loaded {
        Ok(cfg) => cfg.output.clone(),
        Err(_) => PathBuf::from("out"),
    });
    let result = loaded
        .map_err(|source| StageError { stage: "config", source })
        .and_then(|cfg| run(task, &cfg, &out));
    match result {
        Ok(summary) => {
            // a closed stdout (e.g. `| head`) must not fail a finished run
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            eprintln!("acfront: {} artifacts in {}", task.name(), out.join(task.name()).display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("acfront: {err}");
            if let Err(e) = write_error(&out, task, &err) {
                eprintln!("acfront: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}
