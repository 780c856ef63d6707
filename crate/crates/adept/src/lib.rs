//! Experiment harness for the `adept-core` algorithms: TOML configs, a rayon
//! client executor, CSV results and raw array files.

pub mod config;
pub mod exec;
pub mod output;
pub mod persist;
pub mod run;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use config::ExperimentConfig;
use run::{RunError, RunOutput, RunResult};

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub trace: PathBuf,
    pub config: PathBuf,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output(format!("{}: {e}", path.display()))
}

/// Writes `results.csv`, `trace.csv` and the resolved `config.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> RunResult<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    let paths = OutputPaths {
        results: dir.join("results.csv"),
        trace: dir.join("trace.csv"),
        config: dir.join("config.json"),
    };
    let f = File::create(&paths.results).map_err(|e| out_err(&paths.results, e))?;
    out.results
        .write_csv(BufWriter::new(f))
        .map_err(|e| out_err(&paths.results, e))?;
    let f = File::create(&paths.trace).map_err(|e| out_err(&paths.trace, e))?;
    output::write_trace_csv(run::trace_point_name(cfg.task.task()), &out.trace, BufWriter::new(f))
        .map_err(|e| out_err(&paths.trace, e))?;
    let json = serde_json::json!({ "config_hash": cfg.hash(), "config": cfg });
    fs::write(&paths.config, serde_json::to_string_pretty(&json).expect("config serializes"))
        .map_err(|e| out_err(&paths.config, e))?;
    Ok(paths)
}
