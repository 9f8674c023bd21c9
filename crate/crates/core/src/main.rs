use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use balnet::harness::artifacts::{ManifestStatus, RunManifest};
use balnet::harness::config::{
    emit_config, parse_config, ConfigError, ExperimentKind, ExperimentSpec,
};
use balnet::harness::{emit_figure_data, figure_runs, run_experiment, FigureId, FigureStatus};

#[derive(Parser)]
#[command(
    name = "balnet",
    version,
    about = "Balanced-network simulations, PDE diagnostics and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the configured one).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Network SDE run.
    Simulate(Common),
    /// Time-rescaled early dynamics against the frozen-measure ODE.
    Early(Common),
    /// Fokker-Planck run, or an epsilon sweep when the config asks for one.
    Pde(Common),
    /// Double-limit sweep, or an epsilon sweep when the config asks for one.
    Sweep(Common),
    /// Network run with balance-voltage predictions.
    Balance(Common),
    /// CSV data for the collapse and balance figures.
    Figures(Common),
    /// Print the default configuration of an experiment kind.
    Defaults {
        #[arg(long, default_value = "network-run")]
        kind: String,
    },
}

fn default_spec(kind: ExperimentKind, seed: u64) -> ExperimentSpec {
    if kind == ExperimentKind::BalanceAnalysis {
        ExperimentSpec::chemical(kind, seed)
    } else {
        ExperimentSpec::new(kind, seed)
    }
}

fn load(
    common: &Common,
    default_kind: ExperimentKind,
    allowed: &[ExperimentKind],
) -> Result<ExperimentSpec, String> {
    let mut spec = match &common.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            // A command-line seed satisfies the required key.
            let text = match (common.seed, text.parse::<toml::Table>()) {
                (Some(seed), Ok(table)) if !table.contains_key("seed") => {
                    format!("seed = {seed}\n{text}")
                }
                _ => text,
            };
            parse_config(&text).map_err(|e| e.to_string())?
        }
        None => {
            let seed = common
                .seed
                .ok_or_else(|| ConfigError::MissingKey("seed".into()).to_string())?;
            default_spec(default_kind, seed)
        }
    };
    if !allowed.is_empty() && !allowed.contains(&spec.kind) {
        return Err(format!(
            "experiment kind `{}` does not belong to this subcommand",
            spec.kind.name()
        ));
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(out) = &common.out {
        spec.output_dir = out.display().to_string();
    }
    Ok(spec)
}

fn exit_for(status: ManifestStatus) -> ExitCode {
    match status {
        ManifestStatus::Completed | ManifestStatus::NoData => ExitCode::SUCCESS,
        ManifestStatus::Partial | ManifestStatus::Failed => ExitCode::from(2),
    }
}

fn figures(spec: &ExperimentSpec, out: &Path) -> balnet::Result<RunManifest> {
    let mut manifest = RunManifest::new(spec);
    manifest.kind = "figures".into();
    std::fs::create_dir_all(out).map_err(|e| balnet::Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    match figure_runs(spec) {
        Ok(runs) => {
            for id in [FigureId::Fig1, FigureId::Fig2] {
                let selected: Vec<_> = runs
                    .iter()
                    .filter(|(f, _)| *f == id)
                    .map(|(_, r)| r.clone())
                    .collect();
                for r in &selected {
                    if !r.record.completed() {
                        manifest.fail(
                            ManifestStatus::Partial,
                            format!("run `{}` did not complete", r.label),
                        );
                    }
                }
                match emit_figure_data(&selected, id, out) {
                    Ok(o) if o.status == FigureStatus::NoData => {
                        manifest.fail(ManifestStatus::Partial, format!("{id:?}: NO_DATA"));
                    }
                    Ok(o) => manifest.files.extend(o.files),
                    Err(e) => manifest.fail(ManifestStatus::Partial, format!("{id:?}: {e}")),
                }
            }
        }
        Err(e) => manifest.fail(ManifestStatus::Failed, e.to_string()),
    }
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    manifest.write(out)?;
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    use ExperimentKind::*;
    let (common, default_kind, allowed): (Common, ExperimentKind, &[ExperimentKind]) = match &cli
        .command
    {
        Command::Simulate(c) => (c.clone(), NetworkRun, &[NetworkRun]),
        Command::Early(c) => (c.clone(), RescaledEarly, &[RescaledEarly]),
        Command::Pde(c) => (c.clone(), PdeRun, &[PdeRun, EpsilonSweep]),
        Command::Sweep(c) => (
            c.clone(),
            DoubleLimitSweep,
            &[DoubleLimitSweep, EpsilonSweep],
        ),
        Command::Balance(c) => (c.clone(), BalanceAnalysis, &[BalanceAnalysis]),
        Command::Figures(c) => (c.clone(), NetworkRun, &[]),
        Command::Defaults { kind } => {
            let parsed: Result<ExperimentKind, _> = toml::Value::String(kind.clone()).try_into();
            return match parsed {
                Ok(k) => {
                    print!("{}", emit_config(&default_spec(k, 0)));
                    ExitCode::SUCCESS
                }
                Err(_) => {
                    eprintln!("error: unknown experiment kind `{kind}`");
                    ExitCode::from(1)
                }
            };
        }
    };

    let spec = match load(&common, default_kind, allowed) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Some(k) = common.threads {
        if k == 0
            || rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .is_err()
        {
            eprintln!("configuration error: cannot start {k} worker threads");
            return ExitCode::from(1);
        }
    }

    let out = PathBuf::from(&spec.output_dir);
    let result = if matches!(cli.command, Command::Figures(_)) {
        figures(&spec, &out)
    } else {
        run_experiment(&spec, &out)
    };
    match result {
        Ok(manifest) => {
            for e in &manifest.errors {
                eprintln!("error: {e}");
            }
            println!(
                "{}: {:?}, {} files in {}",
                manifest.kind,
                manifest.status,
                manifest.files.len(),
                out.display()
            );
            exit_for(manifest.status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
