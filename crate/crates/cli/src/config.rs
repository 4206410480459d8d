//! Config layering: preset, then JSON file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chorus_core::harness::{ExperimentConfig, ExperimentPreset, SeparationPolicy};
use chorus_core::scenario::ReceiverLayout;
use clap::Args;

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Named preset to start from.
    #[arg(long, value_parser = preset_name)]
    pub preset: Option<String>,
    /// JSON config; keys mirror the snake_case config fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Slots simulated after the bootstrap round.
    #[arg(long)]
    pub slots: Option<u64>,
    #[arg(long)]
    pub targets: Option<usize>,
    /// Aftershock distance omega, meters.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Audible range r, meters.
    #[arg(long)]
    pub range: Option<f64>,
    /// Largest positive ranging offset l_o, meters.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Receiver grid spacing, meters.
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    /// Mean target speed, m/s.
    #[arg(long)]
    pub speed: Option<f64>,
    /// Fixed separation distance d_s, meters, instead of the derived one.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Tracks kept per target (l).
    #[arg(long)]
    pub tracks: Option<usize>,
    /// Candidate positions per target and slot (N_c).
    #[arg(long)]
    pub candidates: Option<usize>,
}

fn preset_name(s: &str) -> std::result::Result<String, String> {
    if ExperimentPreset::by_name(s).is_some() {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown preset; expected one of {}",
            ExperimentPreset::names().join(", ")
        ))
    }
}

pub fn load_json(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl Overrides {
    pub fn preset(&self) -> ExperimentPreset {
        self.preset
            .as_deref()
            .and_then(ExperimentPreset::by_name)
            .unwrap_or_else(ExperimentPreset::baseline)
    }

    /// Resolve against `base`, which the config file (if any) replaces.
    pub fn apply(&self, base: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => load_json(path)?,
            None => base,
        };
        if let Some(v) = self.slots {
            c.slots = v;
        }
        if let Some(v) = self.targets {
            c.scenario.n_targets = v;
        }
        if let Some(v) = self.omega {
            c.scenario.acoustic = c.scenario.acoustic.with_aftershock_distance(v)?;
        }
        if let Some(v) = self.range {
            let a = c.scenario.acoustic;
            c.scenario.acoustic =
                chorus_core::AcousticParams::new(v, a.aftershock_distance(), a.sound_speed())?;
        }
        if let Some(v) = self.noise {
            c.scenario.noise_max_offset = v;
        }
        if let Some(v) = self.grid_spacing {
            c.scenario.receivers = ReceiverLayout::Grid { spacing: v };
        }
        if let Some(v) = self.speed {
            c.scenario.speed_mean = v;
        }
        if let Some(v) = self.separation {
            c.separation = SeparationPolicy::Fixed { distance: v };
        }
        if let Some(v) = self.tracks {
            c.tracker.tracks = v;
        }
        if let Some(v) = self.candidates {
            c.tracker.candidates = v;
        }
        c.validate()?;
        Ok(c)
    }
}
