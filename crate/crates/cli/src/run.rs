//! Shared state of one run and the manifest it leaves behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use doeblin::rng::{RngKey, GENERATOR};
use serde::Serialize;
use serde_json::Value;

use crate::config::{self, RunConfig};
use crate::error::CliError;

pub const SEED_ENV: &str = "DOEBLIN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Build,
    Run,
    Write,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamRecord {
    pub purpose: String,
    pub ids: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    status: &'static str,
    exit_code: u8,
    failure_stage: Option<Stage>,
    error: Option<String>,
    config_path: String,
    config: Option<Value>,
    seed: Option<u64>,
    seed_source: Option<&'static str>,
    rng: &'static str,
    streams: &'a [StreamRecord],
    workers: usize,
    wall_time_secs: f64,
    outputs: &'a [String],
    summary: Value,
}

pub struct Run {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub workers: usize,
    config_path: PathBuf,
    started: Instant,
    pub stage: Stage,
    pub config: Option<RunConfig>,
    config_echo: Option<Value>,
    seed: Option<(u64, &'static str)>,
    streams: Vec<StreamRecord>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, config_path: &Path, out_dir: &Path, workers: usize) -> Self {
        Self {
            command,
            out_dir: out_dir.to_path_buf(),
            workers,
            config_path: config_path.to_path_buf(),
            started: Instant::now(),
            stage: Stage::Config,
            config: None,
            config_echo: None,
            seed: None,
            streams: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads the config and settles the seed: `--seed`, then the
    /// environment, then the config file.
    pub fn load(&mut self, flag_seed: Option<u64>, env_seed: Option<String>) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("--workers must be ≥ 1".into()));
        }
        let text = std::fs::read_to_string(&self.config_path)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.config_path.display())))?;
        let (config, echo) = config::parse(&text)?;
        self.config_echo = Some(serde_json::to_value(echo).map_err(|e| CliError::Config(e.to_string()))?);
        if let Some(kind) = &config.experiment {
            if kind != self.command {
                return Err(CliError::Config(format!("config is for {kind:?}, command is {:?}", self.command)));
            }
        }
        let env_seed = env_seed
            .map(|s| s.trim().parse::<u64>().map_err(|e| CliError::Config(format!("{SEED_ENV}={s:?}: {e}"))))
            .transpose()?;
        self.seed = match (flag_seed, env_seed, config.seed) {
            (Some(s), _, _) => Some((s, "flag")),
            (None, Some(s), _) => Some((s, "env")),
            (None, None, Some(s)) => Some((s, "config")),
            _ => return Err(CliError::Config("a seed is required (config `seed`, --seed or DOEBLIN_SEED)".into())),
        };
        self.config = Some(config);
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        self.config.as_ref().expect("config loaded")
    }

    pub fn config_dir(&self) -> PathBuf {
        self.config_path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn key(&self) -> RngKey {
        RngKey::new(self.seed.expect("seed settled").0)
    }

    /// Notes that streams `0..count` of `purpose` were used.
    pub fn streams(&mut self, purpose: &str, count: u64) {
        self.streams.push(StreamRecord { purpose: purpose.into(), ids: (0..count).collect() });
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join(name), contents)?;
        self.outputs.push(name.into());
        Ok(())
    }

    /// Writes `manifest.json`; called on success and failure alike.
    pub fn finish(&self, outcome: &Result<Value, CliError>) -> Result<(), CliError> {
        let (status, exit_code, failure_stage, error, summary) = match outcome {
            Ok(v) => ("ok", 0, None, None, v.clone()),
            Err(e) => ("failed", e.exit_code(), Some(self.stage), Some(e.to_string()), Value::Null),
        };
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            status,
            exit_code,
            failure_stage,
            error,
            config_path: self.config_path.display().to_string(),
            config: self.config_echo.clone(),
            seed: self.seed.map(|s| s.0),
            seed_source: self.seed.map(|s| s.1),
            rng: GENERATOR,
            streams: &self.streams,
            workers: self.workers,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
