//! Motion-consistency particle filter over candidate positions.
//!
//! Each target keeps `l` tracks. A step extends every track with every
//! candidate, scores the extension by the product of a speed density and a
//! speed-change density, and keeps the `l` best. The densities are Gaussians
//! refreshed by an exponential moving average of the retained particles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::ids::TargetId;
use crate::locating::CandidatePosition;

/// Positions kept per track; only the tail matters for scoring.
const HISTORY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPdf {
    pub mean: f64,
    pub std: f64,
}

impl MotionPdf {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Blend the sample mean and spread into the current parameters.
    pub fn update(&mut self, samples: &[f64], alpha: f64, std_floor: f64) {
        let weights = vec![1.0; samples.len()];
        self.update_weighted(samples, &weights, alpha, std_floor);
    }

    /// As [`MotionPdf::update`] with weighted batch moments. A batch whose
    /// weights sum to zero is treated as unweighted.
    pub fn update_weighted(
        &mut self,
        samples: &[f64],
        weights: &[f64],
        alpha: f64,
        std_floor: f64,
    ) {
        if samples.is_empty() {
            return;
        }
        let mut total: f64 = weights.iter().sum();
        let uniform;
        let weights = if total > 0.0 && total.is_finite() {
            weights
        } else {
            uniform = vec![1.0; samples.len()];
            total = samples.len() as f64;
            &uniform
        };
        let m = samples.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
        let var = samples
            .iter()
            .zip(weights)
            .map(|(x, w)| w * (x - m).powi(2))
            .sum::<f64>()
            / total;
        self.mean = (1.0 - alpha) * self.mean + alpha * m;
        self.std = ((1.0 - alpha) * self.std + alpha * var.sqrt()).max(std_floor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Tracks kept per target (`l`).
    pub tracks: usize,
    pub pdf_alpha: f64,
    pub std_floor: f64,
    /// Consecutive slots without candidates before the target is lost.
    pub max_coast: u32,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tracks: 5,
            pdf_alpha: 0.05,
            std_floor: 0.05,
            max_coast: 5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tracks == 0 {
            return Err(Error::Config {
                field: "tracks".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(self.pdf_alpha > 0.0 && self.pdf_alpha <= 1.0) {
            return Err(Error::Config {
                field: "pdf_alpha".into(),
                reason: format!("must lie in (0, 1], got {}", self.pdf_alpha),
            });
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return Err(Error::Config {
                field: "std_floor".into(),
                reason: format!("must be positive, got {}", self.std_floor),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    positions: VecDeque<Point2D>,
    /// Displacement per slot over the last extension; `None` until the first one.
    speed: Option<f64>,
    /// Displacement vector per slot over the last extension.
    velocity: (f64, f64),
}

impl Track {
    pub fn start(at: Point2D) -> Self {
        Self {
            positions: VecDeque::from([at]),
            speed: None,
            velocity: (0.0, 0.0),
        }
    }

    pub fn last(&self) -> Point2D {
        *self.positions.back().expect("tracks are never empty")
    }

    pub fn speed(&self) -> Option<f64> {
        self.speed
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn extended(&self, to: Point2D, speed: f64, velocity: (f64, f64)) -> Self {
        let mut positions = self.positions.clone();
        positions.push_back(to);
        if positions.len() > HISTORY {
            positions.pop_front();
        }
        Self {
            positions,
            speed: Some(speed),
            velocity,
        }
    }
}

/// One track extended by one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub track: usize,
    pub candidate: usize,
    pub speed: f64,
    /// Change of speed against the parent track, when it has one.
    pub accel: Option<f64>,
    pub likelihood: f64,
    pub residue: f64,
}

pub fn evaluate_likelihood(
    speed: f64,
    accel: Option<f64>,
    speed_pdf: &MotionPdf,
    accel_pdf: &MotionPdf,
) -> f64 {
    speed_pdf.density(speed) * accel.map_or(1.0, |a| accel_pdf.density(a))
}

/// Refresh both densities from the retained particles, each weighted by its
/// likelihood so implausible survivors barely move the moments.
pub fn update_pdf(
    speed_pdf: &mut MotionPdf,
    accel_pdf: &mut MotionPdf,
    kept: &[Particle],
    config: &FilterConfig,
) {
    let speeds: Vec<f64> = kept.iter().map(|p| p.speed).collect();
    let weights: Vec<f64> = kept.iter().map(|p| p.likelihood).collect();
    speed_pdf.update_weighted(&speeds, &weights, config.pdf_alpha, config.std_floor);
    let (accels, accel_weights): (Vec<f64>, Vec<f64>) = kept
        .iter()
        .filter_map(|p| p.accel.map(|a| (a, p.likelihood)))
        .unzip();
    accel_pdf.update_weighted(&accels, &accel_weights, config.pdf_alpha, config.std_floor);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// Backed by a candidate position this slot.
    Located,
    /// Extrapolated from the previous velocity.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub estimate: Point2D,
    pub kind: EstimateKind,
    /// Comparisons spent ranking particles.
    pub comparisons: usize,
    pub particles: usize,
}

#[derive(Debug, Clone)]
pub struct TargetFilter {
    id: TargetId,
    tracks: Vec<Track>,
    speed_pdf: MotionPdf,
    accel_pdf: MotionPdf,
    config: FilterConfig,
    coasting: u32,
}

impl TargetFilter {
    /// Fresh filter with `l` copies of the bootstrap position. Speeds are in
    /// meters per slot; densities start wide, speed around half the per-slot
    /// bound and speed change around zero.
    pub fn new(id: TargetId, start: Point2D, step_bound: f64, config: FilterConfig) -> Self {
        let scale = step_bound / 2.0;
        Self {
            id,
            tracks: vec![Track::start(start); config.tracks],
            speed_pdf: MotionPdf::new(scale, scale),
            accel_pdf: MotionPdf::new(0.0, scale),
            config,
            coasting: 0,
        }
    }

    pub fn id(&self) -> TargetId {
        self.id
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn speed_pdf(&self) -> MotionPdf {
        self.speed_pdf
    }

    pub fn accel_pdf(&self) -> MotionPdf {
        self.accel_pdf
    }

    pub fn estimate(&self) -> Point2D {
        self.tracks[0].last()
    }

    pub fn coasting(&self) -> u32 {
        self.coasting
    }

    pub fn is_lost(&self) -> bool {
        self.coasting >= self.config.max_coast
    }

    /// Restart tracks at `at` after reacquisition; learned densities stay.
    pub fn restart(&mut self, at: Point2D) {
        self.tracks = vec![Track::start(at); self.config.tracks];
        self.coasting = 0;
    }

    /// Advance by `elapsed_slots` using this slot's candidates.
    pub fn step(&mut self, candidates: &[CandidatePosition], elapsed_slots: u32) -> StepOutcome {
        let dt = f64::from(elapsed_slots.max(1));
        if candidates.is_empty() {
            return self.coast(dt);
        }
        self.coasting = 0;

        let mut particles = Vec::with_capacity(self.tracks.len() * candidates.len());
        for (ti, track) in self.tracks.iter().enumerate() {
            for (ci, c) in candidates.iter().enumerate() {
                let speed = track.last().distance(c.position) / dt;
                let accel = track.speed.map(|s| speed - s);
                particles.push(Particle {
                    track: ti,
                    candidate: ci,
                    speed,
                    accel,
                    likelihood: evaluate_likelihood(speed, accel, &self.speed_pdf, &self.accel_pdf),
                    residue: c.residue,
                });
            }
        }
        let n = particles.len();
        let mut comparisons = 0usize;
        particles.sort_by(|a, b| {
            comparisons += 1;
            b.likelihood
                .total_cmp(&a.likelihood)
                .then(a.residue.total_cmp(&b.residue))
                .then(a.track.cmp(&b.track))
                .then(a.candidate.cmp(&b.candidate))
        });

        // Identical parents produce identical particles; keep one of each.
        let mut kept: Vec<Particle> = Vec::with_capacity(self.config.tracks);
        for p in &particles {
            if kept.len() == self.config.tracks {
                break;
            }
            let parent = &self.tracks[p.track];
            let dup = kept.iter().any(|k| {
                k.candidate == p.candidate
                    && self.tracks[k.track].last() == parent.last()
                    && self.tracks[k.track].speed == parent.speed
            });
            if !dup {
                kept.push(*p);
            }
        }
        for p in &particles {
            if kept.len() == self.config.tracks {
                break;
            }
            if !kept.contains(p) {
                kept.push(*p);
            }
        }

        let tracks: Vec<Track> = kept
            .iter()
            .map(|p| {
                let parent = &self.tracks[p.track];
                let to = candidates[p.candidate].position;
                let from = parent.last();
                let velocity = ((to.x - from.x) / dt, (to.y - from.y) / dt);
                parent.extended(to, p.speed, velocity)
            })
            .collect();
        update_pdf(
            &mut self.speed_pdf,
            &mut self.accel_pdf,
            &kept,
            &self.config,
        );
        self.tracks = tracks;
        StepOutcome {
            estimate: self.estimate(),
            kind: EstimateKind::Located,
            comparisons,
            particles: n,
        }
    }

    fn coast(&mut self, dt: f64) -> StepOutcome {
        self.coasting += 1;
        self.tracks = self
            .tracks
            .iter()
            .map(|t| {
                let to = t.last().offset(t.velocity.0 * dt, t.velocity.1 * dt);
                let mut next = t.extended(to, t.speed.unwrap_or(0.0), t.velocity);
                next.speed = t.speed;
                next
            })
            .collect();
        StepOutcome {
            estimate: self.estimate(),
            kind: EstimateKind::Predicted,
            comparisons: 0,
            particles: 0,
        }
    }
}
