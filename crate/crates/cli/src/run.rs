//! Run context, checkpoints, manifests and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tube_core::ensemble::{run, Checkpoint, Experiment, RunControl, RunOutcome};
use tube_core::geometry::HorizonReport;
use tube_core::SimConfig;

use crate::args::Common;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String, Option<Box<HorizonReport>>),
    #[error("checkpoint format version {found}, expected {expected}")]
    CheckpointVersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint belongs to a different run (parameter hash {found}, expected {expected})")]
    CheckpointMismatch { found: String, expected: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{0}")]
    Simulation(#[from] tube_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::ValidationFailed(..) => "ValidationFailed",
            CliError::CheckpointVersionMismatch { .. } => "CheckpointVersionMismatch",
            CliError::CheckpointMismatch { .. } => "CheckpointMismatch",
            CliError::CorruptCheckpoint(_) => "CorruptCheckpoint",
            CliError::Simulation(_) => "SimulationError",
            CliError::Io(_) => "IoError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::ValidationFailed(..) => 4,
            CliError::CheckpointVersionMismatch { .. } | CliError::CheckpointMismatch { .. } | CliError::CorruptCheckpoint(_) => 5,
            CliError::Simulation(_) | CliError::Io(_) => 1,
        }
    }

    pub fn record(&self) -> Value {
        let mut r = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::ValidationFailed(_, Some(report)) = self {
            r["report"] = json!(report);
        }
        r
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Exit status for a run stopped early with a checkpoint on disk.
pub const EXIT_STOPPED: i32 = 3;

pub enum Finished<T> {
    Done(T),
    Stopped(PathBuf),
}

pub struct Ctx {
    pub common: Common,
    pub config: SimConfig,
    pub subcommand: &'static str,
    pub params: Value,
    pub hash: String,
    started: Instant,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Ctx {
    pub fn new(common: Common, subcommand: &'static str, params: Value) -> CliResult<Ctx> {
        let config = match &common.config {
            Some(p) => SimConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => SimConfig::default(),
        };
        if common.threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if common.particles == Some(0) {
            return Err(CliError::Config("--particles must be positive".into()));
        }
        let identity = json!({
            "subcommand": subcommand,
            "parameters": params,
            "particles": common.particles,
            "seed": common.seed,
            "config": config,
        });
        let hash = sha256_hex(identity.to_string().as_bytes());
        fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
        Ok(Ctx { common, config, subcommand, params, hash, started: Instant::now() })
    }

    pub fn particles(&self, default: u64) -> u64 {
        self.common.particles.unwrap_or(default)
    }

    pub fn seed(&self) -> u64 {
        self.common.seed
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.common.out.join(format!("{}.checkpoint.json", self.subcommand))
    }

    /// Runs `exp` over `n` particles honoring the checkpoint options.
    pub fn execute<E: Experiment>(&self, exp: &E, n: u64) -> CliResult<Finished<E::Output>> {
        let resume = match &self.common.resume {
            Some(p) => Some(self.read_checkpoint::<E::Acc>(p)?),
            None => None,
        };
        let path = self.checkpoint_path();
        let mut write_err = None;
        let mut on_checkpoint = |cp: &Checkpoint<E::Acc>| {
            if let Err(e) = self.write_checkpoint(&path, cp) {
                write_err = Some(e);
            }
            Ok(())
        };
        let ctl = RunControl {
            threads: self.common.threads,
            checkpoint_every: self.common.checkpoint_every.or(self.common.stop_after),
            resume,
            on_checkpoint: Some(&mut on_checkpoint),
            stop_after: self.common.stop_after,
        };
        let outcome = run(exp, n, self.seed(), ctl)?;
        if let Some(e) = write_err {
            return Err(e);
        }
        Ok(match outcome {
            RunOutcome::Complete(out) => Finished::Done(out),
            RunOutcome::Stopped(_) => Finished::Stopped(path),
        })
    }

    fn write_checkpoint<A: Serialize>(&self, path: &Path, cp: &Checkpoint<A>) -> CliResult<()> {
        let acc = serde_json::to_string(&cp.acc).map_err(|e| CliError::Io(e.to_string()))?;
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            config_hash: self.hash.clone(),
            master_seed: self.seed(),
            next_index: cp.next_index,
            acc_sha256: sha256_hex(acc.as_bytes()),
            acc,
        };
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(&file).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    fn read_checkpoint<A: for<'de> Deserialize<'de>>(&self, path: &Path) -> CliResult<Checkpoint<A>> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| CliError::CorruptCheckpoint(format!("unreadable header: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::CheckpointVersionMismatch { found: file.format_version, expected: FORMAT_VERSION });
        }
        if file.config_hash != self.hash || file.master_seed != self.seed() {
            return Err(CliError::CheckpointMismatch { found: file.config_hash, expected: self.hash.clone() });
        }
        if sha256_hex(file.acc.as_bytes()) != file.acc_sha256 {
            return Err(CliError::CorruptCheckpoint("accumulator hash mismatch".into()));
        }
        let acc = serde_json::from_str(&file.acc).map_err(|e| CliError::CorruptCheckpoint(e.to_string()))?;
        Ok(Checkpoint { next_index: file.next_index, acc })
    }

    /// Writes `<name>.csv` and its manifest `<name>.manifest.json`.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>, summary: Value) -> CliResult<()> {
        let path = self.common.out.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for r in &rows {
            w.write_record(r).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.write_manifest(name, summary, rows.len())
    }

    pub fn write_json(&self, name: &str, value: &Value) -> CliResult<()> {
        let path = self.common.out.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        self.write_manifest(name, Value::Null, 1)
    }

    fn write_manifest(&self, name: &str, summary: Value, rows: usize) -> CliResult<()> {
        let manifest = json!({
            "format_version": FORMAT_VERSION,
            "config_hash": self.hash,
            "master_seed": self.seed(),
            "subcommand": self.subcommand,
            "parameters": self.params,
            "particles": self.common.particles,
            "config": self.config,
            "build": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
            "telemetry": {
                "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
                "threads": self.common.threads,
                "rows": rows,
            },
            "summary": summary,
        });
        let path = self.common.out.join(format!("{name}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config_hash: String,
    master_seed: u64,
    next_index: u64,
    acc_sha256: String,
    /// Accumulator as JSON text, hashed byte for byte.
    acc: String,
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
