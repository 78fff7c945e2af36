//! Command-line orchestration: config ingestion, task dispatch, artifacts
//! and the run manifest.

mod config;
mod describe;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    ActionBox, ExperimentConfig, GraphonSpec, GridSpec, InitialSpec, LabelValues, LqModelParams, ModelSpec,
    PolicySpec, SimulationSpec, TaskSpec,
};
pub use describe::{describe, example_config, TASKS};

use crate::error::Error;

/// Environment variable overriding `simulation.seed`.
pub const SEED_ENV: &str = "GRAPHON_MFC_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown task `{task}`; valid tasks: {}", TASKS.join(", "))]
    UnknownTask { task: String },
    #[error("invalid option: {0}")]
    Option(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 2: invalid input, 3: numerical failure, 1: I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ReadConfig { .. } | Self::UnknownTask { .. } | Self::Option(_) => 2,
            Self::Core(e) => match e {
                Error::Io(_) | Error::Csv(_) => 1,
                Error::BlowUp { .. }
                | Error::NonFinite(_)
                | Error::ActionOutside { .. }
                | Error::Transport(_)
                | Error::ZeroDenominator
                | Error::Divergence { .. } => 3,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::ReadConfig { .. } => "read_config",
            Self::UnknownTask { .. } => "unknown_task",
            Self::Option(_) => "invalid_option",
            Self::Core(e) => match e {
                Error::DimensionMismatch { .. } => "dimension_mismatch",
                Error::EmptyMeasure => "empty_measure",
                Error::GridMismatch => "grid_mismatch",
                Error::ZeroDegree { .. } => "zero_degree",
                Error::NonFinite(_) => "non_finite",
                Error::BlowUp { .. } => "blow_up",
                Error::ActionOutside { .. } => "action_outside",
                Error::TimeGridMismatch(_) => "time_grid_mismatch",
                Error::StreamMismatch => "stream_mismatch",
                Error::ZeroDenominator => "zero_denominator",
                Error::Divergence { .. } => "divergence",
                Error::BudgetExceeded { .. } => "budget_exceeded",
                Error::EmptyActionGrid => "empty_action_grid",
                Error::MarginalViolation { .. } => "marginal_violation",
                Error::InvalidParameter(_) => "invalid_parameter",
                Error::MissingTrajectories(_) => "missing_trajectories",
                Error::Transport(_) => "transport",
                Error::Io(_) => "io",
                Error::Csv(_) => "csv",
                Error::Json(_) => "invalid_config",
            },
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> Value {
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    NotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub task: String,
    /// SHA-256 of the config with object keys sorted.
    pub config_hash: String,
    pub seed: u64,
    pub seed_from_env: bool,
    pub status: RunStatus,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub summary: Value,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per hardware thread.
    pub threads: Option<usize>,
    /// Overrides the config's `output` directory.
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// 0 on success, 4 when an iteration did not converge.
    pub fn exit_code(&self) -> i32 {
        match self.manifest.status {
            RunStatus::Success => 0,
            RunStatus::NotConverged => 4,
        }
    }
}

/// Hex SHA-256 of the canonical serialization (object keys sorted) of a
/// JSON document.
pub fn config_hash(text: &str) -> Result<String, CliError> {
    let value: Value = serde_json::from_str(text).map_err(Error::from)?;
    Ok(hex::encode(Sha256::digest(value.to_string().as_bytes())))
}

/// Parse a seed override such as the value of [`SEED_ENV`].
pub fn parse_seed(text: &str) -> Result<u64, CliError> {
    text.trim()
        .parse()
        .map_err(|_| CliError::Option(format!("{SEED_ENV} must be an unsigned integer, got `{text}`")))
}

/// Execute the task named in the config file and persist its artifacts,
/// a config copy and a manifest.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(config_path).map_err(|source| CliError::ReadConfig {
        path: config_path.to_path_buf(),
        source,
    })?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let hash = config_hash(&text)?;
    let seed = opts.seed_override.unwrap_or(cfg.simulation.seed);
    let dir = match (&opts.out, &cfg.output) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("runs").join(format!("{}-{}", cfg.task.name(), &hash[..12])),
    };
    std::fs::create_dir_all(&dir).map_err(Error::from)?;

    let mut run_dir = tasks::RunDir::new(&dir);
    run_dir.write_bytes("config.json", text.as_bytes())?;
    let outcome = match opts.threads {
        Some(0) => return Err(CliError::Option("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Option(format!("cannot build a pool of {n} threads: {e}")))?
            .install(|| tasks::execute(&cfg, seed, &mut run_dir))?,
        None => tasks::execute(&cfg, seed, &mut run_dir)?,
    };
    let mut outputs = run_dir.into_outputs();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        task: cfg.task.name().into(),
        config_hash: hash,
        seed,
        seed_from_env: opts.seed_override.is_some(),
        status: if outcome.converged {
            RunStatus::Success
        } else {
            RunStatus::NotConverged
        },
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs,
        summary: outcome.summary,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text).map_err(Error::from)?;
    Ok(RunOutcome { dir, manifest })
}
