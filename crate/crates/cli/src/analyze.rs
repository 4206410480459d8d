//! Geometry and feasibility tables.

use std::io::Write;

use anyhow::Result;
use chorus_core::feasibility::{
    empirical_three_receiver_prob, prob_three_receivers_lb, solve_separation_distance,
    solve_separation_distance_worst_case, symmetric_neighbors, symmetric_union_blind_area,
    DeploymentModel,
};
use chorus_core::geometry::{blind_region_area, monte_carlo_blind_estimate};
use chorus_core::{AcousticParams, Point2D};
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// Pairwise blind-region area against target separation.
    Blind,
    /// Union blind area with k - 1 symmetric neighbours.
    Union,
    /// Coverage bound against separation and receiver density.
    Bound,
    /// Separation distance per receiver density.
    Separation,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum, default_value = "blind")]
    pub table: Table,
    /// Aftershock distance omega, meters.
    #[arg(long, default_value_t = 0.33)]
    pub omega: f64,
    /// Audible range r, meters.
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    /// Separation grid step, meters.
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Monte Carlo samples (or Poisson draws); 0 skips the sampled columns.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receiver densities, per square meter.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 1.0])]
    pub density: Vec<f64>,
    /// Coverage probability required of the separation distance.
    #[arg(long, default_value_t = 0.99)]
    pub prob: f64,
}

fn grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn run(args: &AnalyzeArgs, out: impl Write) -> Result<()> {
    anyhow::ensure!(args.step > 0.0, "--step must be positive");
    let params = AcousticParams::new(args.range, args.omega, AcousticParams::SPEED_OF_SOUND)?;
    let r = params.audible_range();
    let mut w = csv::Writer::from_writer(out);
    let sampled = args.samples > 0;
    match args.table {
        Table::Blind => {
            let mut header = vec!["d_ab", "closed_form"];
            if sampled {
                header.extend(["monte_carlo", "std_error"]);
            }
            w.write_record(&header)?;
            for d in grid(args.step, 2.0 * r) {
                let mut row = vec![fmt(d), fmt(blind_region_area(d, &params)?)];
                if sampled {
                    let est = monte_carlo_blind_estimate(
                        Point2D::ORIGIN,
                        Point2D::new(d, 0.0),
                        &params,
                        args.samples,
                        args.seed,
                    )?;
                    row.extend([fmt(est.area()), fmt(est.std_error())]);
                }
                w.write_record(&row)?;
            }
        }
        Table::Union => {
            anyhow::ensure!(sampled, "the union table needs --samples > 0");
            let mut header = vec!["d".to_string()];
            header.extend((2..=7).map(|k| format!("k{k}")));
            w.write_record(&header)?;
            for d in grid(args.step, 2.0 * r).into_iter().skip(1) {
                let mut row = vec![fmt(d)];
                for k in 2..=7 {
                    let est = symmetric_union_blind_area(k, d, &params, args.samples, args.seed)?;
                    row.push(fmt(est.area()));
                }
                w.write_record(&row)?;
            }
        }
        Table::Bound => {
            let mut header = vec!["lambda", "d", "bound"];
            if sampled {
                header.push("empirical_six_neighbours");
            }
            w.write_record(&header)?;
            for &lambda in &args.density {
                for d in grid(args.step, 2.0 * r).into_iter().skip(1) {
                    let bound = prob_three_receivers_lb(&DeploymentModel::new(lambda, d)?);
                    let mut row = vec![fmt(lambda), fmt(d), fmt(bound)];
                    if sampled {
                        let others = symmetric_neighbors(Point2D::ORIGIN, 7, d)?;
                        row.push(fmt(empirical_three_receiver_prob(
                            lambda,
                            Point2D::ORIGIN,
                            &others,
                            &params,
                            args.samples,
                            args.seed,
                        )?));
                    }
                    w.write_record(&row)?;
                }
            }
        }
        Table::Separation => {
            let mut header = vec!["lambda", "d_s_bound"];
            if sampled {
                header.push("d_s_worst_case");
            }
            w.write_record(&header)?;
            for &lambda in &args.density {
                let mut row = vec![
                    fmt(lambda),
                    fmt(solve_separation_distance(lambda, args.prob)?),
                ];
                if sampled {
                    // Unsatisfiable probabilities leave the cell empty.
                    row.push(
                        solve_separation_distance_worst_case(
                            lambda,
                            args.prob,
                            &params,
                            args.samples,
                            args.seed,
                        )
                        .map(fmt)
                        .unwrap_or_default(),
                    );
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
