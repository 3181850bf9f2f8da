use blimpswarm::config::{ConfigError, SimConfig};
use blimpswarm::experiment::{run_delivery_runs, run_pickup_grid, to_csv, ExperimentError};
use blimpswarm::perception::PerceptionError;
use blimpswarm::service::{serve, ServeOptions};
use blimpswarm::training::{train_from_files, TrainingError};
use blimpswarm::World;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Blimp swarm simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a color family to labeled grid cells of PNG images.
    TrainColors {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pickup grid and the delivery runs; write metrics CSVs.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        seeds: usize,
        /// Pickup grid rows.
        #[arg(long)]
        out: PathBuf,
        /// Delivery rows; defaults to `<out>` with a `_delivery` suffix.
        #[arg(long)]
        delivery_out: Option<PathBuf>,
    },
    /// Run a live world behind a WebSocket endpoint.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Simulated seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Append every snapshot to this JSONL file.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Where each blimp keeps its parameter file.
        #[arg(long, default_value = "state")]
        state_dir: PathBuf,
    },
    /// Print the JSON schema of the config file.
    Schema,
}

const EXIT_INPUT: u8 = 2;
const EXIT_SAMPLES: u8 = 3;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load(config: Option<&Path>) -> Result<SimConfig, ConfigError> {
    match config {
        Some(p) => SimConfig::load(p),
        None => Ok(SimConfig::default()),
    }
}

fn delivery_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "metrics".into());
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_delivery{ext}"))
}

fn train_colors(images: &Path, labels: &Path, out: &Path) -> ExitCode {
    match train_from_files(images, labels) {
        Ok((family, n)) => {
            let json = serde_json::to_string_pretty(&family).expect("families serialize");
            if let Err(e) = std::fs::write(out, json) {
                return fail(EXIT_INPUT, format!("cannot write {}: {e}", out.display()));
            }
            let [l1, l2] = family.eigenvalues();
            println!("samples: {n}");
            println!("sigma eigenvalues: {l1:.4} {l2:.4}");
            ExitCode::SUCCESS
        }
        Err(e @ TrainingError::Perception(PerceptionError::InsufficientSamples { .. })) => fail(EXIT_SAMPLES, e),
        Err(e) => fail(EXIT_INPUT, e),
    }
}

fn experiment(config: Option<&Path>, seeds: usize, out: &Path, delivery_out: Option<PathBuf>) -> ExitCode {
    let cfg = match load(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let run = || -> Result<(), ExperimentError> {
        let pickup = run_pickup_grid(&cfg, seeds)?;
        write(out, &to_csv(&pickup))?;
        if cfg.experiment.delivery.is_some() {
            let rows = run_delivery_runs(&cfg, seeds)?;
            write(&delivery_out.unwrap_or_else(|| delivery_path(out)), &to_csv(&rows))?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ ExperimentError::Config(_)) => fail(EXIT_INPUT, e),
        Err(e) => fail(1, e),
    }
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text)
        .map_err(|e| ConfigError::Unreadable { path: path.display().to_string(), reason: e.to_string() }.into())
}

fn serve_cmd(config: Option<&Path>, host: &str, port: u16, opts: ServeOptions, state_dir: &Path) -> ExitCode {
    let cfg = match load(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let s = &cfg.serve;
    let world = cfg
        .setup(s.n_blimps, s.n_balloons, s.scenario, s.seed)
        .map_err(|e| e.to_string())
        .and_then(|setup| World::new(setup, Some(state_dir)).map_err(|e| e.to_string()));
    let world = match world {
        Ok(w) => w,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match rt.block_on(serve(world, &format!("{host}:{port}"), opts)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Cmd::TrainColors { images, labels, out } => train_colors(&images, &labels, &out),
        Cmd::Experiment { config, seeds, out, delivery_out } => experiment(config.as_deref(), seeds, &out, delivery_out),
        Cmd::Serve { config, port, host, speed, record, state_dir } => {
            serve_cmd(config.as_deref(), &host, port, ServeOptions { speed, record }, &state_dir)
        }
        Cmd::Schema => {
            println!("{}", serde_json::to_string_pretty(&SimConfig::schema()).expect("schema serializes"));
            ExitCode::SUCCESS
        }
    }
}
