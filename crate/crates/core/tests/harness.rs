use sparse_rl::harness::{
    aggregate_run_dirs, expand_grid, is_complete, load_policy, load_run, noise_robustness_eval, run_dir_name, run_sweep, train_run_full,
    write_run_dir, ExperimentConfig, GridSpec, Regime,
};

const TEMPLATE: &str = "\
[run]
agent = \"dqn\"
env = \"cart-pole\"
regime = \"rigl\"
total_steps = 1200
eval_interval = 100
eval_episodes = 2

[sparsity]
sparsity = 0.8

[topology]
update_interval = 100

[training]
hidden = [24, 24]
batch_size = 16
initial_collect = 200
";

#[test]
fn run_directory_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(TEMPLATE).unwrap();
    let out = train_run_full(&config).unwrap();
    let run = dir.path().join(run_dir_name(&config));
    write_run_dir(&run, &out).unwrap();
    assert!(is_complete(&run, &config));
    assert_eq!(load_run(&run).unwrap(), out.log);
    assert_eq!(load_policy(&run).unwrap(), out.policy);
    assert_eq!(out.log.evals.len(), 12);
    assert!(out.log.final_score().is_ok());

    let sigmas = [0.0, 0.2];
    let a = noise_robustness_eval(&out.policy, &sigmas, 2, 1).unwrap();
    let b = noise_robustness_eval(&load_policy(&run).unwrap(), &sigmas, 2, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_resumes_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::from_toml_str("seeds = [0, 1]\n[axes]\n\"sparsity.sparsity\" = [0.5, 0.9]\n").unwrap();
    let sparse = expand_grid(TEMPLATE, &grid).unwrap();
    let dense_template: String = TEMPLATE
        .replace("regime = \"rigl\"", "regime = \"dense\"")
        .replace("[sparsity]\nsparsity = 0.8\n", "")
        .replace("[topology]\nupdate_interval = 100\n", "");
    let dense = expand_grid(&dense_template, &GridSpec::from_toml_str("seeds = [0, 1]\n").unwrap()).unwrap();
    let mut all = sparse.clone();
    all.extend(dense);

    let first = run_sweep(&all, dir.path(), 2).unwrap();
    assert_eq!(first.completed.len(), 6);
    assert!(first.failed.is_empty());
    let second = run_sweep(&all, dir.path(), 2).unwrap();
    assert_eq!(second.skipped.len(), 6);
    assert!(second.completed.is_empty());

    let report = aggregate_run_dirs(&[dir.path().to_path_buf()], 0).unwrap();
    assert_eq!(report.rows.len(), 3);
    let dense_row = report.rows.iter().find(|r| r.regime == Regime::Dense).unwrap();
    assert_eq!(dense_row.runs, 2);
    for row in &report.rows {
        assert!(row.ci_lower <= row.iqm && row.iqm <= row.ci_upper);
    }
    let sparse_rows: Vec<_> = report.rows.iter().filter(|r| r.regime == Regime::Rigl).collect();
    assert!(sparse_rows[0].mean_active_params != sparse_rows[1].mean_active_params);
}
