//! Experiment configuration, the slot loop and its metrics.

mod engine;
mod io;
mod metrics;

pub use engine::{
    replay, run_experiment, AgreementCheck, MultiTargetTracker, ReplayInput, ReplayOutput,
    RunArtifacts,
};
pub use io::{
    read_csv, read_distances, read_receivers, read_schedule, read_truth, write_artifacts,
    write_csv, DistanceRow, ErrorRow, EstimateRow, ReceiverRow, ScheduleRow, TruthCsvRow,
};
pub use metrics::{
    compute_efficiency, compute_error_cdf, error_rows, summarize, ErrorCdf, MetricsReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{solve_separation_distance, solve_separation_distance_worst_case};
use crate::locating::LocatorConfig;
use crate::scenario::{Arena, ScenarioConfig};
use crate::tracking::FilterConfig;

/// How the scheduler's separation distance `d_s` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeparationPolicy {
    /// Disk lower bound on the detectable region; independent of `ω`.
    PoissonBound {
        target_prob: f64,
    },
    /// Smallest `d` at which a target ringed by neighbours at `d` still hears
    /// three receivers with `target_prob`, with the detectable region
    /// estimated by Monte Carlo for the configured `ω`.
    WorstCase {
        target_prob: f64,
        samples: u64,
    },
    Fixed {
        distance: f64,
    },
}

impl Default for SeparationPolicy {
    fn default() -> Self {
        SeparationPolicy::WorstCase {
            target_prob: 0.7,
            samples: 20_000,
        }
    }
}

impl SeparationPolicy {
    pub fn resolve(&self, scenario: &ScenarioConfig) -> Result<f64> {
        let density = scenario.receiver_density();
        match *self {
            SeparationPolicy::PoissonBound { target_prob } => {
                solve_separation_distance(density, target_prob)
            }
            SeparationPolicy::WorstCase {
                target_prob,
                samples,
            } => solve_separation_distance_worst_case(
                density,
                target_prob,
                &scenario.acoustic,
                samples,
                scenario.seed,
            ),
            SeparationPolicy::Fixed { distance } => {
                if distance.is_finite() && distance > 0.0 {
                    Ok(distance)
                } else {
                    Err(Error::Config {
                        field: "separation.distance".into(),
                        reason: format!("must be positive, got {distance}"),
                    })
                }
            }
        }
    }
}

/// Floor on the derived labeling radius so static targets still label.
pub const MIN_STEP_BOUND: f64 = 0.01;

/// Floor on the derived residue slack, m^2.
pub const MIN_RESIDUE_SLACK: f64 = 1e-6;

/// Floor on the derived consistency tolerance, m.
pub const MIN_CONSISTENCY_TOLERANCE: f64 = 0.01;

/// Tracker knobs shared by `run` and `replay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerSettings {
    /// Tracks per target (`l`).
    pub tracks: usize,
    /// Candidate positions per target and slot (`N_c`).
    pub candidates: usize,
    pub max_combinations: usize,
    /// Per-slot labeling radius; derived from the speed model when absent.
    pub step_bound: Option<f64>,
    /// Residue margin over the best candidate; derived from the ranging
    /// offset when absent.
    pub residue_slack: Option<f64>,
    /// Range error treated as consistent when scoring candidates; derived
    /// from the ranging offset when absent.
    pub consistency_tolerance: Option<f64>,
    pub pdf_alpha: f64,
    pub std_floor: f64,
    pub max_coast: u32,
    /// Fraction of expected receivers that must confirm a located estimate;
    /// 0 disables the check.
    pub agreement_fraction: f64,
    /// Consecutive unconfirmed slots before a track is dropped.
    pub agreement_patience: u32,
}

impl Default for TrackerSettings {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            tracks: f.tracks,
            candidates: 5,
            max_combinations: 200,
            step_bound: None,
            residue_slack: None,
            consistency_tolerance: None,
            pdf_alpha: f.pdf_alpha,
            std_floor: f.std_floor,
            max_coast: f.max_coast,
            agreement_fraction: 0.5,
            agreement_patience: 3,
        }
    }
}

impl TrackerSettings {
    /// Labeling radius: kinematic bound over one slot plus the largest
    /// ranging offset, never below `MIN_STEP_BOUND`.
    pub fn step_bound_for(&self, scenario: &ScenarioConfig) -> f64 {
        self.step_bound.unwrap_or_else(|| {
            (LocatorConfig::step_bound_for(
                scenario.speed_mean,
                scenario.speed_std,
                scenario.slot_length,
            ) + scenario.noise_max_offset)
                .max(MIN_STEP_BOUND)
        })
    }

    pub fn locator(&self, scenario: &ScenarioConfig) -> LocatorConfig {
        let step_bound = self.step_bound_for(scenario);
        LocatorConfig {
            step_bound,
            max_candidates: self.candidates,
            max_combinations: self.max_combinations,
            arena: Some(scenario.arena),
            arena_margin: step_bound,
            residue_slack: self
                .residue_slack
                .unwrap_or(scenario.noise_max_offset.powi(2) + MIN_RESIDUE_SLACK),
            consistency_tolerance: self
                .consistency_tolerance
                .unwrap_or(scenario.noise_max_offset + MIN_CONSISTENCY_TOLERANCE),
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            tracks: self.tracks,
            pdf_alpha: self.pdf_alpha,
            std_floor: self.std_floor,
            max_coast: self.max_coast,
        }
    }
}

/// Everything one run needs. Scenario fields sit at the top level of the
/// JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    /// Slots simulated after the bootstrap round.
    #[serde(default = "default_slots")]
    pub slots: u64,
    #[serde(default)]
    pub tracker: TrackerSettings,
    #[serde(default)]
    pub separation: SeparationPolicy,
}

fn default_slots() -> u64 {
    600
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            slots: default_slots(),
            tracker: TrackerSettings::default(),
            separation: SeparationPolicy::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.slots == 0 {
            return Err(Error::Config {
                field: "slots".into(),
                reason: "must be at least 1".into(),
            });
        }
        self.tracker.locator(&self.scenario).validate()?;
        self.tracker.filter().validate()?;
        let f = self.tracker.agreement_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config {
                field: "tracker.agreement_fraction".into(),
                reason: format!("must lie in [0, 1], got {f}"),
            });
        }
        if f > 0.0 && self.tracker.agreement_patience == 0 {
            return Err(Error::Config {
                field: "tracker.agreement_patience".into(),
                reason: "must be at least 1 when the check is enabled".into(),
            });
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Aftershock distance `ω`, meters.
    Omega,
    /// Largest ranging offset, meters.
    NoiseOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub config: ExperimentConfig,
    pub sweep: Option<(SweepVariable, Vec<f64>)>,
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let Some((_, values)) = &self.sweep {
            if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config {
                    field: "sweep".into(),
                    reason: "values must be positive".into(),
                });
            }
        }
        Ok(())
    }

    /// Config for one sweep value.
    pub fn config_at(&self, value: f64) -> Result<ExperimentConfig> {
        let mut config = self.config.clone();
        match self.sweep.as_ref().map(|s| s.0) {
            Some(SweepVariable::Omega) => {
                config.scenario.acoustic =
                    config.scenario.acoustic.with_aftershock_distance(value)?;
            }
            Some(SweepVariable::NoiseOffset) => config.scenario.noise_max_offset = value,
            None => {}
        }
        Ok(config)
    }

    pub fn names() -> &'static [&'static str] {
        &["baseline", "single_static", "omega_sweep", "noise_sweep"]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "baseline" => Some(Self::baseline()),
            "single_static" => Some(Self::single_static()),
            "omega_sweep" => Some(Self::omega_sweep()),
            "noise_sweep" => Some(Self::noise_sweep()),
            _ => None,
        }
    }

    /// Ten targets in a 10 m square with 2 m grid receivers, noiseless.
    pub fn baseline() -> Self {
        Self {
            name: "baseline".into(),
            config: ExperimentConfig::default(),
            sweep: None,
        }
    }

    pub fn single_static() -> Self {
        let mut config = ExperimentConfig::default();
        config.scenario.n_targets = 1;
        config.scenario.speed_mean = 0.0;
        config.scenario.speed_std = 0.0;
        config.scenario.arena = Arena {
            width: 10.0,
            height: 10.0,
        };
        config.slots = 100;
        Self {
            name: "single_static".into(),
            config,
            sweep: None,
        }
    }

    pub fn omega_sweep() -> Self {
        Self {
            name: "omega_sweep".into(),
            config: ExperimentConfig::default(),
            sweep: Some((SweepVariable::Omega, vec![0.33, 1.65, 3.30])),
        }
    }

    pub fn noise_sweep() -> Self {
        Self {
            name: "noise_sweep".into(),
            config: ExperimentConfig::default(),
            sweep: Some((SweepVariable::NoiseOffset, vec![0.01, 0.05, 0.10])),
        }
    }
}
