use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sparse_rl::harness::{
    aggregate_run_dirs, expand_grid, load_policy, noise_robustness_eval, run_dir_name, run_sweep, train_run_full, write_report_csv,
    write_report_svg, write_run_dir, ExperimentConfig, GridSpec,
};
use sparse_rl::sparse::{count_flops, count_flops_for_plan, count_params, count_params_for_plan, make_plan, parse_architecture, Distribution};

#[derive(Parser)]
#[command(name = "sparse-rl", version, about = "Sparse training for DQN and SAC on classic-control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Train {
        config: PathBuf,
        /// Parent of the run directory; defaults to $SPARSE_RL_OUTPUT or `runs`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run every point of a grid, skipping runs that already completed.
    Sweep {
        template: PathBuf,
        grid: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Parallel runs; defaults to $SPARSE_RL_WORKERS or 1.
        #[arg(long)]
        workers: Option<usize>,
        /// Only print the planned run directories.
        #[arg(long)]
        dry_run: bool,
    },
    /// Aggregate completed run directories into a table and a plot.
    Aggregate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "aggregate.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "aggregate.svg")]
        svg: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and FLOPs counts of an architecture across sparsity levels.
    Flops {
        architecture: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,0.9,0.95,0.99")]
        sparsities: Vec<f64>,
        #[arg(long, default_value = "erk")]
        distribution: Distribution,
    },
    /// Evaluate a trained policy under observation noise.
    Robustness {
        run: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3,0.5")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        episodes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn output_root(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("SPARSE_RL_OUTPUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs"))
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train { config, output } => {
            let config = ExperimentConfig::from_toml_str(&read(&config)?)?;
            let dir = output_root(output).join(run_dir_name(&config));
            let result = train_run_full(&config)?;
            write_run_dir(&dir, &result)?;
            let last = result.log.evals.last().map(|e| e.mean_return);
            writeln!(out, "{}", dir.display())?;
            match result.log.final_score() {
                Ok(score) => writeln!(out, "final score {score}")?,
                Err(_) => writeln!(out, "last evaluation {last:?} (too few evaluations for a final score)")?,
            }
        }
        Command::Sweep { template, grid, output, workers, dry_run } => {
            let grid = GridSpec::from_toml_str(&read(&grid)?)?;
            let configs = expand_grid(&read(&template)?, &grid)?;
            let root = output_root(output);
            if dry_run {
                for c in &configs {
                    writeln!(out, "{}", root.join(run_dir_name(c)).display())?;
                }
                return Ok(());
            }
            let workers = match workers {
                Some(w) => w,
                None => match std::env::var("SPARSE_RL_WORKERS") {
                    Ok(v) => v.parse().with_context(|| format!("SPARSE_RL_WORKERS={v:?}"))?,
                    Err(_) => 1,
                },
            };
            let report = run_sweep(&configs, &root, workers)?;
            writeln!(out, "completed {} skipped {} failed {}", report.completed.len(), report.skipped.len(), report.failed.len())?;
            for (dir, message) in &report.failed {
                writeln!(out, "failed {}: {message}", dir.display())?;
            }
            if !report.failed.is_empty() {
                bail!("{} runs failed", report.failed.len());
            }
        }
        Command::Aggregate { runs, csv, svg, seed } => {
            let report = aggregate_run_dirs(&runs, seed)?;
            write_report_csv(&report, &csv)?;
            write_report_svg(&report, &svg)?;
            for row in &report.rows {
                writeln!(
                    out,
                    "{} {} sparsity={:?}: IQM {:.3} [{:.3}, {:.3}] over {} runs",
                    row.agent, row.regime, row.sparsity, row.iqm, row.ci_lower, row.ci_upper, row.runs
                )?;
            }
        }
        Command::Flops { architecture, sparsities, distribution } => {
            let layers = parse_architecture(&read(&architecture)?)?;
            let dense_active: Vec<usize> = layers.iter().map(|l| l.size()).collect();
            let dense_params = count_params(&layers, &dense_active)?;
            let dense_flops = count_flops(&layers, &dense_active)?;
            writeln!(out, "sparsity,distribution,dense_params,active_params,dense_flops,sparse_flops,flops_ratio")?;
            for s in sparsities {
                let (params, flops) = if s == 0.0 {
                    (dense_params, dense_flops)
                } else {
                    let plan = make_plan(distribution, s, &layers)?;
                    (count_params_for_plan(&layers, &plan)?, count_flops_for_plan(&layers, &plan)?)
                };
                writeln!(
                    out,
                    "{s},{},{},{},{dense_flops},{flops},{}",
                    format!("{distribution:?}").to_lowercase(),
                    params.dense_total,
                    params.active_total,
                    flops as f64 / dense_flops as f64
                )?;
            }
        }
        Command::Robustness { run, sigmas, episodes, seed } => {
            let policy = load_policy(&run)?;
            writeln!(out, "sigma,mean_return,std_return,episodes")?;
            for p in noise_robustness_eval(&policy, &sigmas, episodes, seed)? {
                writeln!(out, "{},{},{},{}", p.sigma, p.mean_return, p.std_return, p.episodes)?;
            }
        }
    }
    Ok(())
}
