//! Grid sweeps over a template config.
//!
//! A grid file lists seeds and, under `[axes]`, dotted config keys with the
//! values to try:
//!
//! ```toml
//! seeds = [0, 1, 2]
//!
//! [axes]
//! "sparsity.sparsity" = [0.5, 0.9]
//! "training.weight_decay" = [0.0, 1e-6, 1e-4]
//! ```
//!
//! Every combination of axis values is run once per seed. All points are
//! resolved before anything runs, so one bad value rejects the whole grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use super::persist::{is_complete, write_failure, write_run_dir};
use super::train::train_run_full;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<toml::Value>>,
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError::Invalid(format!("bad axis key {key:?}")))?;
    let mut cur = table;
    for part in parts {
        cur = cur
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("axis key {key:?} crosses a non-table value")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// All resolved configs of a grid, in a deterministic order.
pub fn expand_grid(template: &str, grid: &GridSpec) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let base: toml::Table = toml::from_str(template).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if grid.seeds.is_empty() {
        return Err(ConfigError::Invalid("grid needs at least one seed".into()));
    }
    if let Some((k, _)) = grid.axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(ConfigError::Invalid(format!("axis {k:?} has no values")));
    }
    let axes: Vec<(&String, &Vec<toml::Value>)> = grid.axes.iter().collect();
    let points: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut configs = Vec::with_capacity(points * grid.seeds.len());
    for index in 0..points {
        let mut table = base.clone();
        let mut rest = index;
        for (key, values) in axes.iter().rev() {
            set_dotted(&mut table, key, values[rest % values.len()].clone())?;
            rest /= values.len();
        }
        for &seed in &grid.seeds {
            let mut t = table.clone();
            set_dotted(&mut t, "run.seed", toml::Value::Integer(seed as i64))?;
            let raw: ExperimentConfig = toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
            configs.push(raw.resolve()?);
        }
    }
    Ok(configs)
}

/// `<agent>-<env>-<regime>-<hash prefix>`.
pub fn run_dir_name(config: &ExperimentConfig) -> String {
    format!("{}-{}-{}-{}", config.run.agent, config.run.env, config.run.regime, &config.content_hash()[..16])
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub completed: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
    pub failed: Vec<(PathBuf, String)>,
}

enum Outcome {
    Done(PathBuf),
    Skipped(PathBuf),
    Failed(PathBuf, String),
}

/// Runs every config not already completed under `output`, on `workers`
/// threads. Failures are recorded in the run directory and do not stop the
/// sweep.
pub fn run_sweep(configs: &[ExperimentConfig], output: &Path, workers: usize) -> Result<SweepReport, HarnessError> {
    std::fs::create_dir_all(output).map_err(HarnessError::io(output))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Format { what: "worker pool".into(), message: e.to_string() })?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        configs
            .par_iter()
            .map(|config| {
                let dir = output.join(run_dir_name(config));
                if is_complete(&dir, config) {
                    return Outcome::Skipped(dir);
                }
                let result = train_run_full(config).and_then(|out| write_run_dir(&dir, &out));
                match result {
                    Ok(()) => Outcome::Done(dir),
                    Err(e) => {
                        let message = e.to_string();
                        let _ = write_failure(&dir, config, &e);
                        Outcome::Failed(dir, message)
                    }
                }
            })
            .collect()
    });
    let mut report = SweepReport::default();
    for o in outcomes {
        match o {
            Outcome::Done(d) => report.completed.push(d),
            Outcome::Skipped(d) => report.skipped.push(d),
            Outcome::Failed(d, m) => report.failed.push((d, m)),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEMPLATE: &str = "[run]\nagent = \"dqn\"\nenv = \"cart-pole\"\nregime = \"set\"\n";

    #[test]
    fn cartesian_product_times_seeds() {
        let grid = GridSpec::from_toml_str(
            "seeds = [0, 1]\n[axes]\n\"sparsity.sparsity\" = [0.5, 0.9]\n\"topology.drop_fraction\" = [0.1, 0.3, 0.5]\n",
        )
        .unwrap();
        let configs = expand_grid(TEMPLATE, &grid).unwrap();
        assert_eq!(configs.len(), 12);
        let mut hashes: Vec<String> = configs.iter().map(|c| c.content_hash()).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 12);
        assert_eq!(configs[0].sparsity(), Some(0.5));
        assert_eq!(configs[0].topology.drop_fraction, Some(0.1));
        assert_eq!(configs[11].run.seed, 1);
    }

    #[test]
    fn invalid_point_rejects_grid() {
        let grid = GridSpec::from_toml_str("seeds = [0]\n[axes]\n\"sparsity.sparsity\" = [0.5, 1.5]\n").unwrap();
        assert!(expand_grid(TEMPLATE, &grid).is_err());
        let grid = GridSpec::from_toml_str("seeds = [0]\n[axes]\n\"sparsity.sparsity\" = [0.5]\n\"topology.bogus\" = [1]\n").unwrap();
        assert!(expand_grid(TEMPLATE, &grid).is_err());
    }
}
