//! Run directories.
//!
//! ```text
//! <run>/config.toml     resolved config, canonical form
//! <run>/evals.csv       step, mean_return, std_return
//! <run>/sparsity.csv    step, network, sparsity
//! <run>/snr.csv         step, network, mean_snr
//! <run>/policy.txt      final evaluation policy
//! <run>/summary.toml    written last; marks the run as complete
//! <run>/failure.txt     only for failed runs
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::constants::CONSTANTS_VERSION;

use super::config::ExperimentConfig;
use super::policy::Policy;
use super::train::{RunLog, RunOutput};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub status: String,
    pub config_hash: String,
    pub constants_version: String,
    pub final_score: Option<f64>,
    pub active_params: usize,
    pub weights_digest: String,
    pub wall_clock_secs: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Format { what: path.display().to_string(), message: e.to_string() }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(HarnessError::io(path))
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(HarnessError::io(path))
}

/// Writes a finished run. The summary goes last, via rename, so a crash
/// never leaves a directory that looks complete.
pub fn write_run_dir(dir: &Path, output: &RunOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let log = &output.log;
    let _ = fs::remove_file(dir.join("failure.txt"));
    write_text(&dir.join("config.toml"), &log.config.canonical_text())?;
    write_csv(&dir.join("evals.csv"), &log.evals, &["step", "mean_return", "std_return"])?;
    write_csv(&dir.join("sparsity.csv"), &log.sparsity, &["step", "network", "sparsity"])?;
    write_csv(&dir.join("snr.csv"), &log.snr, &["step", "network", "mean_snr"])?;
    write_text(&dir.join("policy.txt"), &output.policy.to_text())?;
    let summary = RunSummary {
        status: "ok".into(),
        config_hash: log.config.content_hash(),
        constants_version: CONSTANTS_VERSION.into(),
        final_score: log.final_score().ok(),
        active_params: log.active_params,
        weights_digest: log.weights_digest.clone(),
        wall_clock_secs: log.wall_clock_secs,
    };
    let text = toml::to_string(&summary).map_err(|e| HarnessError::Format { what: "summary".into(), message: e.to_string() })?;
    let tmp = dir.join("summary.toml.tmp");
    write_text(&tmp, &text)?;
    fs::rename(&tmp, dir.join("summary.toml")).map_err(HarnessError::io(dir))
}

/// Records why a run failed, next to whatever it wrote before failing.
pub fn write_failure(dir: &Path, config: &ExperimentConfig, error: &HarnessError) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_text(&dir.join("config.toml"), &config.canonical_text())?;
    write_text(&dir.join("failure.txt"), &format!("{error}\n"))
}

fn read_summary(dir: &Path) -> Result<RunSummary, HarnessError> {
    let path = dir.join("summary.toml");
    toml::from_str(&read_text(&path)?).map_err(|e| HarnessError::Format { what: path.display().to_string(), message: e.to_string() })
}

/// Whether `dir` holds a completed run of `config`.
pub fn is_complete(dir: &Path, config: &ExperimentConfig) -> bool {
    read_summary(dir).is_ok_and(|s| s.status == "ok" && s.config_hash == config.content_hash())
}

pub fn load_run(dir: &Path) -> Result<RunLog, HarnessError> {
    let summary = read_summary(dir)?;
    let config = ExperimentConfig::from_toml_str(&read_text(&dir.join("config.toml"))?)?;
    if config.content_hash() != summary.config_hash {
        return Err(HarnessError::Format {
            what: dir.display().to_string(),
            message: "config.toml does not match the summary hash".into(),
        });
    }
    Ok(RunLog {
        config,
        evals: read_csv(&dir.join("evals.csv"))?,
        sparsity: read_csv(&dir.join("sparsity.csv"))?,
        snr: read_csv(&dir.join("snr.csv"))?,
        active_params: summary.active_params,
        weights_digest: summary.weights_digest,
        wall_clock_secs: summary.wall_clock_secs,
    })
}

pub fn load_policy(dir: &Path) -> Result<Policy, HarnessError> {
    Policy::from_text(&read_text(&dir.join("policy.txt"))?)
}
