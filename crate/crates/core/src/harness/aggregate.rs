use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::sparse::Distribution;

use super::config::{AgentKind, Regime};
use super::persist::load_run;
use super::stats::{iqm_with_ci, normalize_anchored, StatsError, BOOTSTRAP_RESAMPLES};
use super::train::RunLog;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub agent: AgentKind,
    pub regime: Regime,
    pub sparsity: Option<f64>,
    pub distribution: Option<Distribution>,
    pub iqm: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub runs: usize,
    pub envs: usize,
    pub mean_active_params: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
    /// Dense final score per `agent/env`.
    pub baselines: BTreeMap<String, f64>,
}

type GroupKey = (String, String, u64, String);

fn group_key(log: &RunLog) -> GroupKey {
    let c = &log.config;
    (
        c.run.agent.to_string(),
        c.run.regime.name().to_string(),
        c.sparsity().map_or(0, f64::to_bits),
        c.distribution().map_or(String::new(), |d| format!("{d:?}")),
    )
}

fn env_key(log: &RunLog) -> String {
    format!("{}/{}", log.config.run.agent, log.config.run.env)
}

/// Normalised IQM with a stratified bootstrap interval per
/// (agent, regime, sparsity, distribution). Scores are normalised against
/// the mean dense score of the same agent and environment, anchored at the
/// environment's worst return. The result does not depend on input order.
pub fn aggregate_logs(logs: &[RunLog], seed: u64) -> Result<AggregateReport, HarnessError> {
    let mut dense: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut scored = Vec::with_capacity(logs.len());
    for log in logs {
        let score = log.final_score()?;
        if log.config.run.regime == Regime::Dense {
            dense.entry(env_key(log)).or_default().push(score);
        }
        scored.push((log, score));
    }
    let baselines: BTreeMap<String, f64> = dense
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect();

    let mut groups: BTreeMap<GroupKey, (Vec<&RunLog>, BTreeMap<String, Vec<f64>>)> = BTreeMap::new();
    for (log, score) in scored {
        let key = env_key(log);
        let baseline = *baselines.get(&key).ok_or_else(|| StatsError::MissingBaseline(key.clone()))?;
        let floor = log.config.run.env.return_floor();
        let normalized = normalize_anchored(&[score], baseline, floor)?[0];
        let entry = groups.entry(group_key(log)).or_default();
        entry.0.push(log);
        entry.1.entry(key).or_default().push(normalized);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (_, (members, mut strata)) in groups {
        strata.values_mut().for_each(|v| v.sort_by(f64::total_cmp));
        let ci = iqm_with_ci(&strata, BOOTSTRAP_RESAMPLES, 0.95, seed)?;
        let c = &members[0].config;
        rows.push(AggregateRow {
            agent: c.run.agent,
            regime: c.run.regime,
            sparsity: c.sparsity(),
            distribution: c.distribution(),
            iqm: ci.point,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            runs: members.len(),
            envs: strata.len(),
            mean_active_params: members.iter().map(|l| l.active_params as f64).sum::<f64>() / members.len() as f64,
        });
    }
    Ok(AggregateReport { rows, baselines })
}

/// Loads every completed run under the given directories (searched one
/// level deep) and aggregates them.
pub fn aggregate_run_dirs(roots: &[PathBuf], seed: u64) -> Result<AggregateReport, HarnessError> {
    let mut dirs = Vec::new();
    for root in roots {
        if root.join("summary.toml").is_file() {
            dirs.push(root.clone());
            continue;
        }
        for entry in fs::read_dir(root).map_err(HarnessError::io(root))? {
            let path = entry.map_err(HarnessError::io(root))?.path();
            if path.join("summary.toml").is_file() {
                dirs.push(path);
            }
        }
    }
    dirs.sort();
    let logs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    aggregate_logs(&logs, seed)
}

pub fn write_report_csv(report: &AggregateReport, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Format { what: path.display().to_string(), message: e.to_string() })?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| HarnessError::Format { what: path.display().to_string(), message: e.to_string() })?;
    }
    w.flush().map_err(HarnessError::io(path))
}

const COLORS: [&str; 6] = ["#222222", "#888888", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e"];

/// Normalised IQM against active parameter count (log scale), one colour
/// per regime, with interval bars.
pub fn write_report_svg(report: &AggregateReport, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, render_svg(report)).map_err(HarnessError::io(path))
}

fn render_svg(report: &AggregateReport) -> String {
    let (w, h, m) = (720.0, 480.0, 60.0);
    let xs: Vec<f64> = report.rows.iter().map(|r| r.mean_active_params.max(1.0).log10()).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (mut y0, mut y1) = report.rows.iter().fold((0.0_f64, 1.0_f64), |(a, b), r| (a.min(r.ci_lower), b.max(r.ci_upper)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-9 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="grey" stroke-dasharray="4 4"/>"#, py(1.0), w - m).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">active parameters (log10)</text>"#, w / 2.0, h - 15.0).unwrap();
    writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">normalised IQM</text>"#, h / 2.0, h / 2.0).unwrap();
    for (label, x) in [(format!("{x0:.2}"), x0), (format!("{x1:.2}"), x1)] {
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{label}</text>"#, px(x), h - m + 18.0).unwrap();
    }
    for (label, y) in [(format!("{y0:.2}"), y0), (format!("{y1:.2}"), y1)] {
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, m - 6.0, py(y) + 4.0).unwrap();
    }
    for (i, regime) in Regime::ALL.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<(f64, &AggregateRow)> = xs.iter().zip(&report.rows).filter(|(_, r)| r.regime == *regime).map(|(&x, r)| (x, r)).collect();
        if points.is_empty() {
            continue;
        }
        for (x, r) in &points {
            let cx = px(*x);
            writeln!(s, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#, py(r.ci_lower), py(r.ci_upper)).unwrap();
            writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="4" fill="{color}"><title>{} {} {:?}: {:.3}</title></circle>"#, py(r.iqm), r.agent, r.regime, r.sparsity, r.iqm).unwrap();
        }
        let ly = m + 16.0 * i as f64;
        writeln!(s, r#"<circle cx="{}" cy="{ly}" r="4" fill="{color}"/><text x="{}" y="{}">{regime}</text>"#, w - m - 90.0, w - m - 80.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::train::EvalRecord;

    fn log(env: &str, regime: &str, seed: u64, score: f64) -> RunLog {
        let sparsity = if regime == "dense" { String::new() } else { "[sparsity]\nsparsity = 0.9\n".into() };
        let text = format!("[run]\nagent = \"dqn\"\nenv = \"{env}\"\nregime = \"{regime}\"\nseed = {seed}\n{sparsity}");
        RunLog {
            config: ExperimentConfig::from_toml_str(&text).unwrap(),
            evals: (1..=10).map(|i| EvalRecord { step: i * 1000, mean_return: score, std_return: 0.0 }).collect(),
            sparsity: vec![],
            snr: vec![],
            active_params: if regime == "dense" { 1000 } else { 100 },
            weights_digest: String::new(),
            wall_clock_secs: 0.0,
        }
    }

    fn corpus() -> Vec<RunLog> {
        let mut logs = Vec::new();
        for seed in 0..4 {
            logs.push(log("cart-pole", "dense", seed, 400.0 + seed as f64));
            logs.push(log("cart-pole", "rigl", seed, 300.0 + 10.0 * seed as f64));
            logs.push(log("acrobot", "dense", seed, -100.0));
            logs.push(log("acrobot", "rigl", seed, -150.0 + seed as f64));
        }
        logs
    }

    #[test]
    fn anchored_normalisation_and_groups() {
        let report = aggregate_logs(&corpus(), 0).unwrap();
        assert_eq!(report.rows.len(), 2);
        let dense = report.rows.iter().find(|r| r.regime == Regime::Dense).unwrap();
        assert!((dense.iqm - 1.0).abs() < 0.01);
        assert_eq!(dense.envs, 2);
        assert_eq!(dense.runs, 8);
        let rigl = report.rows.iter().find(|r| r.regime == Regime::Rigl).unwrap();
        assert!(rigl.iqm < 1.0 && rigl.iqm > 0.7, "{rigl:?}");
        assert!(rigl.ci_lower <= rigl.iqm && rigl.iqm <= rigl.ci_upper);
    }

    #[test]
    fn order_does_not_matter() {
        let logs = corpus();
        let mut reversed = logs.clone();
        reversed.reverse();
        assert_eq!(aggregate_logs(&logs, 5).unwrap(), aggregate_logs(&reversed, 5).unwrap());
    }

    #[test]
    fn missing_dense_runs_are_reported() {
        let logs: Vec<RunLog> = corpus().into_iter().filter(|l| l.config.run.regime != Regime::Dense || l.config.run.env.name() != "acrobot").collect();
        assert!(matches!(aggregate_logs(&logs, 0), Err(HarnessError::Stats(StatsError::MissingBaseline(_)))));
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = render_svg(&aggregate_logs(&corpus(), 0).unwrap());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 4);
    }
}
