use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chorus_core::harness::{
    error_rows, read_distances, read_receivers, read_schedule, read_truth, replay, run_experiment,
    summarize, write_artifacts, write_csv, ErrorCdf, ExperimentConfig, ExperimentPreset,
    ReplayInput, SweepVariable,
};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

mod analyze;
mod config;

use config::{load_json, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "chorus",
    version,
    about = "Chorus-mode ultrasound localization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write its artifacts.
    Run {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Repeat a scenario over values of omega or the ranging offset.
    Sweep {
        #[arg(long, value_enum)]
        variable: Variable,
        /// Sweep values, meters; defaults to the matching preset's values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Seeds per value.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print geometry and feasibility tables as CSV.
    Analyze {
        #[command(flatten)]
        args: analyze::AnalyzeArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run locating and tracking on recorded distances.
    Replay {
        /// Directory holding receivers.csv, schedule.csv and distances.csv.
        #[arg(long)]
        input: PathBuf,
        /// Ground truth for error metrics; defaults to truth.csv in the input.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variable {
    Omega,
    Noise,
}

impl From<Variable> for SweepVariable {
    fn from(v: Variable) -> Self {
        match v {
            Variable::Omega => SweepVariable::Omega,
            Variable::Noise => SweepVariable::NoiseOffset,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(seed: u64, out: &Path, overrides: &Overrides) -> Result<()> {
    let config = overrides.apply(overrides.preset().config)?.with_seed(seed);
    let artifacts = run_experiment(&config)?;
    write_artifacts(out, &artifacts)?;
    write_json(&out.join("config.json"), &config)?;
    println!("{}", serde_json::to_string_pretty(&artifacts.report)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRun {
    value: f64,
    seed: u64,
    separation_distance: f64,
    efficiency: f64,
    p50: f64,
    p90: f64,
    p99: f64,
    predicted_fraction: f64,
    loss_rate: f64,
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    value: f64,
    seeds: u64,
    efficiency: f64,
    p50: f64,
    p90: f64,
    p99: f64,
}

fn cmd_sweep(
    variable: Variable,
    values: &[f64],
    seeds: u64,
    first_seed: u64,
    out: &Path,
    overrides: &Overrides,
) -> Result<()> {
    anyhow::ensure!(seeds > 0, "--seeds must be at least 1");
    let mut preset = overrides.preset();
    if overrides.preset.is_none() {
        preset = match variable {
            Variable::Omega => ExperimentPreset::omega_sweep(),
            Variable::Noise => ExperimentPreset::noise_sweep(),
        };
    }
    let values: Vec<f64> = if values.is_empty() {
        preset
            .sweep
            .as_ref()
            .map(|s| s.1.clone())
            .unwrap_or_default()
    } else {
        values.to_vec()
    };
    anyhow::ensure!(!values.is_empty(), "no sweep values given");
    preset.config = overrides.apply(preset.config.clone())?;
    preset.sweep = Some((variable.into(), values.clone()));
    preset.validate()?;

    let jobs: Vec<(usize, f64, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| (first_seed..first_seed + seeds).map(move |s| (i, v, s)))
        .collect();
    let results: Vec<(usize, SweepRun, Vec<f64>, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, value, seed)| -> Result<_> {
            let a = run_experiment(&preset.config_at(value)?.with_seed(seed))?;
            let r = &a.report;
            let occupied = r.efficiency * r.slots as f64;
            Ok((
                i,
                SweepRun {
                    value,
                    seed,
                    separation_distance: r.separation_distance,
                    efficiency: r.efficiency,
                    p50: r.p50,
                    p90: r.p90,
                    p99: r.p99,
                    predicted_fraction: r.predicted_fraction,
                    loss_rate: r.loss_rate,
                },
                a.errors.iter().map(|e| e.error).collect(),
                occupied,
                r.slots as f64,
            ))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let mut errors = Vec::new();
        let mut occupied = 0.0;
        let mut slots = 0.0;
        for (j, _, e, occ, n) in &results {
            if *j == i {
                errors.extend_from_slice(e);
                occupied += occ;
                slots += n;
            }
        }
        let cdf = ErrorCdf::from_errors(errors);
        points.push(SweepPoint {
            value,
            seeds,
            efficiency: occupied / slots,
            p50: cdf.quantile(0.5),
            p90: cdf.quantile(0.9),
            p99: cdf.quantile(0.99),
        });
    }
    fs::create_dir_all(out)?;
    write_csv(&out.join("sweep_runs.csv"), results.iter().map(|r| &r.1))?;
    write_csv(&out.join("sweep.csv"), &points)?;
    let mut w = csv::Writer::from_writer(io::stdout());
    for p in &points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_replay(input: &Path, truth: Option<&Path>, out: &Path, overrides: &Overrides) -> Result<()> {
    let recorded = input.join("config.json");
    let base = if recorded.exists() {
        load_json(&recorded)?
    } else {
        overrides.preset().config
    };
    let config: ExperimentConfig = overrides.apply(base)?;
    let replay_input = ReplayInput {
        receivers: read_receivers(&input.join("receivers.csv"))?,
        schedule: read_schedule(&input.join("schedule.csv"))?,
        distances: read_distances(&input.join("distances.csv"))?,
    };
    let result = replay(&replay_input, &config)?;
    fs::create_dir_all(out)?;
    write_csv(&out.join("estimates.csv"), &result.estimates)?;

    let default_truth = input.join("truth.csv");
    let truth_path = truth
        .map(Path::to_path_buf)
        .or_else(|| default_truth.exists().then_some(default_truth));
    if let Some(path) = truth_path {
        let truth = read_truth(&path)?;
        let errors = error_rows(&result.estimates, &truth)?;
        let d_s = config.separation.resolve(&config.scenario)?;
        let report = summarize(&errors, &replay_input.schedule, result.loss_events, d_s)?;
        write_csv(&out.join("errors.csv"), &errors)?;
        write_json(&out.join("summary.json"), &report)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{} estimates written", result.estimates.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run {
            seed,
            out,
            overrides,
        } => cmd_run(*seed, out, overrides),
        Command::Sweep {
            variable,
            values,
            seeds,
            first_seed,
            out,
            overrides,
        } => cmd_sweep(*variable, values, *seeds, *first_seed, out, overrides),
        Command::Analyze { args, out } => match out {
            Some(path) => {
                let f = fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))?;
                analyze::run(args, f)
            }
            None => analyze::run(args, io::stdout().lock()),
        },
        Command::Replay {
            input,
            truth,
            out,
            overrides,
        } => cmd_replay(input, truth.as_deref(), out, overrides),
    }
}
