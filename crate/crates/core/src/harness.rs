//! Experiment runner: CLI, per-trial JSONL records, summary aggregation,
//! per-stage timing reports, and plot emission.

use crate::config::{ConfigError, Params};
use crate::pipeline::{
    run_episode, run_trials, trial_seed, AblationRow, Mode, Outcome, Protocol, RunRecord,
    TimingAggregate,
};
use crate::plot::{emit_plot, PlotStyle};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no records to aggregate")]
    NoRecords,
}

/// A full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub params: Params,
    pub mode: Mode,
    pub trials: u32,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub emit_plots: bool,
    pub protocol: Protocol,
}

/// One JSONL row. Timing fields are informational and excluded from
/// determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u32,
    pub seed: u64,
    pub mode: Mode,
    pub agents: usize,
    pub outcome: Outcome,
    pub steps: u32,
    pub collision_tick: Option<u32>,
    pub collision_agent: Option<u32>,
    pub cfs_attempts: u32,
    pub cfs_feasible: u32,
    pub ssa_fallbacks: u32,
    pub timings: TimingAggregate,
}

impl TrialRow {
    fn new(spec: &ExperimentSpec, trial: u32, record: &RunRecord) -> Self {
        Self {
            trial,
            seed: trial_seed(spec.params.scenario.rng_seed, trial),
            mode: spec.mode,
            agents: spec.params.scenario.n_agents,
            outcome: record.outcome,
            steps: record.steps,
            collision_tick: record.collision_tick,
            collision_agent: record.collision_agent,
            cfs_attempts: record.cfs_attempts,
            cfs_feasible: record.cfs_feasible,
            ssa_fallbacks: record.ssa_fallbacks,
            timings: record.timings,
        }
    }
}

/// Aggregated rates and timings for one mode.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub mode: Mode,
    pub agents: usize,
    pub trials: u32,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_steps: f64,
    pub mean_dagap_ms: f64,
    pub mean_cfs_ms: f64,
    pub mean_ssa_ms: f64,
}

/// Per-mode summary table (one row per `run`, multiple for ablations).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "mode       agents trials success collision timeout mean_steps dagap_ms cfs_ms ssa_ms\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>6.1}% {:>8.1}% {:>6.1}% {:>10.1} {:>8.3} {:>6.3} {:>6.4}\n",
                r.mode.name(),
                r.agents,
                r.trials,
                r.success_rate * 100.0,
                r.collision_rate * 100.0,
                r.timeout_rate * 100.0,
                r.mean_steps,
                r.mean_dagap_ms,
                r.mean_cfs_ms,
                r.mean_ssa_ms,
            ));
        }
        out
    }
}

/// Mean wall time per stage over a set of records.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingReport {
    pub mean_dagap_ms: f64,
    pub mean_cfs_ms: f64,
    pub mean_ssa_ms: f64,
}

/// Per-stage means across records. Errors on an empty slice.
pub fn report_timings(records: &[RunRecord]) -> Result<TimingReport, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let plans: u32 = records.iter().map(|r| r.timings.plans).sum();
    let ssa_steps: u32 = records.iter().map(|r| r.timings.ssa_steps).sum();
    let dagap: f64 = records.iter().map(|r| r.timings.dagap_ms).sum();
    let cfs: f64 = records.iter().map(|r| r.timings.cfs_ms).sum();
    let ssa: f64 = records.iter().map(|r| r.timings.ssa_ms).sum();
    Ok(TimingReport {
        mean_dagap_ms: if plans > 0 { dagap / plans as f64 } else { 0.0 },
        mean_cfs_ms: if plans > 0 { cfs / plans as f64 } else { 0.0 },
        mean_ssa_ms: if ssa_steps > 0 { ssa / ssa_steps as f64 } else { 0.0 },
    })
}

fn summarize(spec: &ExperimentSpec, records: &[RunRecord]) -> SummaryRow {
    let row = AblationRow::from_records(spec.mode, records);
    let timings = report_timings(records).unwrap_or(TimingReport {
        mean_dagap_ms: 0.0,
        mean_cfs_ms: 0.0,
        mean_ssa_ms: 0.0,
    });
    SummaryRow {
        mode: spec.mode,
        agents: spec.params.scenario.n_agents,
        trials: records.len() as u32,
        success_rate: row.success_rate,
        collision_rate: row.collision_rate,
        timeout_rate: row.timeout_rate,
        mean_steps: row.mean_steps,
        mean_dagap_ms: timings.mean_dagap_ms,
        mean_cfs_ms: timings.mean_cfs_ms,
        mean_ssa_ms: timings.mean_ssa_ms,
    }
}

fn jsonl_name(spec: &ExperimentSpec) -> String {
    format!(
        "{}_{}agents.jsonl",
        spec.mode.name(),
        spec.params.scenario.n_agents
    )
}

/// Run one experiment: seeded trials over workers, one JSONL row per trial,
/// a summary row, and optional per-trial plots.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(SummaryRow, Vec<RunRecord>), HarnessError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let records = run_trials(
        &spec.params,
        spec.mode,
        spec.protocol,
        spec.trials,
        spec.workers,
    );

    let path = spec.out_dir.join(jsonl_name(spec));
    let mut file = std::fs::File::create(&path)?;
    for (trial, record) in records.iter().enumerate() {
        let row = TrialRow::new(spec, trial as u32, record);
        serde_json::to_writer(&mut file, &row)?;
        file.write_all(b"\n")?;
    }

    if spec.emit_plots {
        let plot_dir = spec.out_dir.join("plots");
        std::fs::create_dir_all(&plot_dir)?;
        for trial in 0..spec.trials {
            let mut p = spec.params.clone();
            p.scenario.rng_seed = trial_seed(spec.params.scenario.rng_seed, trial);
            let (record, trace) = run_episode(&p, spec.mode, spec.protocol, true);
            let trace = trace.expect("trace recording requested");
            let style = PlotStyle {
                time_fade: record.outcome == Outcome::Collision,
                goal_half_width: p.scenario.goal_radius,
                agent_radius: p.scenario.agent_radius,
            };
            let svg = emit_plot(&trace, p.scenario.goal_v(), &style);
            let name = format!(
                "{}_{}agents_trial{:03}_{}.svg",
                spec.mode.name(),
                p.scenario.n_agents,
                trial,
                match record.outcome {
                    Outcome::Success => "success",
                    Outcome::Collision => "collision",
                    Outcome::Timeout => "timeout",
                }
            );
            std::fs::write(plot_dir.join(name), svg)?;
        }
    }

    Ok((summarize(spec, &records), records))
}

/// Read back a JSONL file written by [`run_experiment`].
pub fn read_jsonl(path: &Path) -> Result<Vec<TrialRow>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line)?);
    }
    Ok(rows)
}

#[derive(Parser, Debug)]
#[command(
    name = "gapnav",
    about = "Gap-based safe navigation benchmark in a dynamic-crowd world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded trials of one pipeline mode and write JSONL + summary.
    Run {
        /// Flat key-value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pipeline mode: sgap | dagap | dagap-cfs | full.
        #[arg(long, default_value = "full")]
        mode: Mode,
        /// Number of dynamic agents (overrides config).
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        /// Base RNG seed; trial i uses seed XOR i (overrides config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory for JSONL, summary, and plots.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Emit one SVG per trial.
        #[arg(long)]
        plots: bool,
        /// Keep driving after a collision (benchmark-table protocol)
        /// instead of stopping the trial.
        #[arg(long)]
        continue_after_collision: bool,
    },
    /// Run the 4-mode ablation at one or more agent counts.
    Ablation {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Agent counts, e.g. --agents 20 --agents 50.
        #[arg(long, default_values_t = [20usize, 50usize])]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_params(config: &Option<PathBuf>) -> Result<Params, HarnessError> {
    let params = match config {
        Some(path) => Params::from_file(path)?,
        None => Params::default(),
    };
    params.validate()?;
    Ok(params)
}

fn clap_mode(m: &Mode) -> Mode {
    *m
}

impl clap::builder::ValueParserFactory for Mode {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<Mode>())
    }
}

fn run_cli(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            mode,
            agents,
            trials,
            seed,
            workers,
            out,
            plots,
            continue_after_collision,
        } => {
            let mut params = load_params(&config)?;
            if let Some(n) = agents {
                params.scenario.n_agents = n;
            }
            if let Some(s) = seed {
                params.scenario.rng_seed = s;
            }
            params.validate()?;
            let spec = ExperimentSpec {
                params,
                mode: clap_mode(&mode),
                trials,
                workers,
                out_dir: out.clone(),
                emit_plots: plots,
                protocol: if continue_after_collision {
                    Protocol::ContinueAfterCollision
                } else {
                    Protocol::StopOnCollision
                },
            };
            let (summary, _) = run_experiment(&spec)?;
            let table = SummaryTable {
                rows: vec![summary],
            };
            print!("{}", table.render());
            std::fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&table)?,
            )?;
            Ok(())
        }
        Command::Ablation {
            config,
            agents,
            trials,
            seed,
            workers,
            out,
        } => {
            let base = load_params(&config)?;
            let mut rows = Vec::new();
            for &n in &agents {
                for mode in Mode::all() {
                    let mut params = base.clone();
                    params.scenario.n_agents = n;
                    if let Some(s) = seed {
                        params.scenario.rng_seed = s;
                    }
                    let spec = ExperimentSpec {
                        params,
                        mode,
                        trials,
                        workers,
                        out_dir: out.clone(),
                        emit_plots: false,
                        protocol: Protocol::StopOnCollision,
                    };
                    let (summary, _) = run_experiment(&spec)?;
                    println!(
                        "{} agents={} collision={:.1}% success={:.1}%",
                        mode.name(),
                        n,
                        summary.collision_rate * 100.0,
                        summary.success_rate * 100.0
                    );
                    rows.push(summary);
                }
            }
            let table = SummaryTable { rows };
            print!("{}", table.render());
            std::fs::create_dir_all(&out)?;
            std::fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&table)?,
            )?;
            Ok(())
        }
    }
}

/// CLI entry point. Returns the process exit code.
pub fn cli_main() -> i32 {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
