//! Ground-truth motion, receiver deployment and per-slot anonymous distance
//! measurements.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::detection::{detect_arrivals, ArrivalEvent};
use crate::error::{Error, Result};
use crate::geometry::{AcousticParams, Point2D};
use crate::ids::{ReceiverId, TargetId};

const DEPLOY_STREAM: u64 = 1;
const MOTION_STREAM: u64 = 2;
const MEASURE_STREAM: u64 = 3;

/// Deterministic generator for one named stream of a scenario seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rectangular arena `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReceiverLayout {
    /// Square grid with the given spacing, including the arena border.
    Grid {
        spacing: f64,
    },
    Explicit {
        positions: Vec<Point2D>,
    },
    /// Homogeneous Poisson field over the arena.
    Poisson {
        density: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub id: ReceiverId,
    pub position: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub arena: Arena,
    pub receivers: ReceiverLayout,
    pub n_targets: usize,
    /// Seconds.
    pub slot_length: f64,
    /// m/s.
    pub speed_mean: f64,
    /// m/s.
    pub speed_std: f64,
    /// Seconds between heading changes.
    pub turn_interval: f64,
    /// Upper end of the uniform positive ranging offset, meters.
    pub noise_max_offset: f64,
    pub acoustic: AcousticParams,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arena: Arena {
                width: 10.0,
                height: 10.0,
            },
            receivers: ReceiverLayout::Grid { spacing: 2.0 },
            n_targets: 10,
            slot_length: 0.1,
            speed_mean: 1.0,
            speed_std: 0.1,
            turn_interval: 5.0,
            noise_max_offset: 0.0,
            acoustic: AcousticParams::default(),
            seed: 0,
        }
    }
}

fn field_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_error(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(field_error(
            field,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        positive("arena.width", self.arena.width)?;
        positive("arena.height", self.arena.height)?;
        match &self.receivers {
            ReceiverLayout::Grid { spacing } => positive("receivers.spacing", *spacing)?,
            ReceiverLayout::Poisson { density } => positive("receivers.density", *density)?,
            ReceiverLayout::Explicit { positions } => {
                if positions.iter().any(|p| !p.is_finite()) {
                    return Err(field_error(
                        "receivers.positions",
                        "coordinates must be finite",
                    ));
                }
            }
        }
        if self.n_targets == 0 {
            return Err(field_error("n_targets", "must be at least 1"));
        }
        positive("slot_length", self.slot_length)?;
        non_negative("speed_mean", self.speed_mean)?;
        non_negative("speed_std", self.speed_std)?;
        positive("turn_interval", self.turn_interval)?;
        non_negative("noise_max_offset", self.noise_max_offset)?;
        Ok(())
    }

    /// Receiver density in receivers per square meter.
    pub fn receiver_density(&self) -> f64 {
        match &self.receivers {
            ReceiverLayout::Grid { spacing } => 1.0 / (spacing * spacing),
            ReceiverLayout::Poisson { density } => *density,
            ReceiverLayout::Explicit { positions } => positions.len() as f64 / self.arena.area(),
        }
    }

    pub fn slots_per_turn(&self) -> u64 {
        ((self.turn_interval / self.slot_length).round() as u64).max(1)
    }
}

/// Place receivers according to the layout. Poisson layouts draw from the
/// scenario seed.
pub fn deploy_receivers(config: &ScenarioConfig) -> Vec<Receiver> {
    let positions: Vec<Point2D> = match &config.receivers {
        ReceiverLayout::Grid { spacing } => {
            let nx = (config.arena.width / spacing + 1e-9).floor() as usize;
            let ny = (config.arena.height / spacing + 1e-9).floor() as usize;
            (0..=ny)
                .flat_map(|j| {
                    (0..=nx).map(move |i| Point2D::new(i as f64 * spacing, j as f64 * spacing))
                })
                .collect()
        }
        ReceiverLayout::Explicit { positions } => positions.clone(),
        ReceiverLayout::Poisson { density } => {
            let mut rng = stream_rng(config.seed, DEPLOY_STREAM);
            let mean = density * config.arena.area();
            let n = Poisson::new(mean)
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0);
            (0..n)
                .map(|_| {
                    Point2D::new(
                        rng.random::<f64>() * config.arena.width,
                        rng.random::<f64>() * config.arena.height,
                    )
                })
                .collect()
        }
    };
    positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| Receiver {
            id: ReceiverId(i as u32),
            position,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub id: TargetId,
    pub position: Point2D,
    /// Radians.
    pub heading: f64,
    /// m/s.
    pub speed: f64,
}

/// Random-walk motion: straight legs at constant speed, a fresh heading and
/// speed every `turn_interval`, mirror reflection at the walls.
#[derive(Debug, Clone)]
pub struct MotionModel {
    arena: Arena,
    slot_length: f64,
    slots_per_turn: u64,
    speed: Normal<f64>,
    rng: ChaCha8Rng,
    steps: u64,
    targets: Vec<TargetState>,
}

impl MotionModel {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, MOTION_STREAM);
        let speed = Normal::new(config.speed_mean, config.speed_std)
            .map_err(|e| field_error("speed_std", e.to_string()))?;
        let targets = (0..config.n_targets)
            .map(|i| TargetState {
                id: TargetId(i as u32),
                position: Point2D::new(
                    rng.random::<f64>() * config.arena.width,
                    rng.random::<f64>() * config.arena.height,
                ),
                heading: rng.random::<f64>() * 2.0 * PI,
                speed: speed.sample(&mut rng).max(0.0),
            })
            .collect();
        Ok(Self {
            arena: config.arena,
            slot_length: config.slot_length,
            slots_per_turn: config.slots_per_turn(),
            speed,
            rng,
            steps: 0,
            targets,
        })
    }

    /// Replace the initial states (tests and hand-built scenes).
    pub fn with_targets(mut self, targets: Vec<TargetState>) -> Self {
        self.targets = targets;
        self
    }

    pub fn targets(&self) -> &[TargetState] {
        &self.targets
    }

    pub fn positions(&self) -> Vec<(TargetId, Point2D)> {
        self.targets.iter().map(|t| (t.id, t.position)).collect()
    }

    /// Advance every target by one slot.
    pub fn step(&mut self) {
        if self.steps > 0 && self.steps.is_multiple_of(self.slots_per_turn) {
            for t in &mut self.targets {
                t.heading = self.rng.random::<f64>() * 2.0 * PI;
                t.speed = self.speed.sample(&mut self.rng).max(0.0);
            }
        }
        for t in &mut self.targets {
            let step = t.speed * self.slot_length;
            let (pos, heading) = reflect_move(self.arena, t.position, t.heading, step);
            t.position = pos;
            t.heading = heading;
        }
        self.steps += 1;
    }
}

/// Move `step` meters along `heading`, mirroring off the arena walls.
fn reflect_move(arena: Arena, from: Point2D, heading: f64, step: f64) -> (Point2D, f64) {
    let (mut dx, mut dy) = (heading.cos(), heading.sin());
    let mut x = from.x + dx * step;
    let mut y = from.y + dy * step;
    for _ in 0..64 {
        let mut bounced = false;
        if x < 0.0 {
            x = -x;
            dx = -dx;
            bounced = true;
        } else if x > arena.width {
            x = 2.0 * arena.width - x;
            dx = -dx;
            bounced = true;
        }
        if y < 0.0 {
            y = -y;
            dy = -dy;
            bounced = true;
        } else if y > arena.height {
            y = 2.0 * arena.height - y;
            dy = -dy;
            bounced = true;
        }
        if !bounced {
            break;
        }
    }
    let x = x.clamp(0.0, arena.width);
    let y = y.clamp(0.0, arena.height);
    (Point2D::new(x, y), dy.atan2(dx).rem_euclid(2.0 * PI))
}

/// Anonymous distances one receiver reported in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymousDistanceSet {
    pub receiver: ReceiverId,
    pub slot: u64,
    pub distances: Vec<f64>,
}

/// Simulate one slot of chorus transmission by `scheduled` targets.
///
/// Detection runs on true geometry; each surviving distance then gets an
/// independent `Uniform(0, noise_max_offset)` offset and the list is shuffled.
pub fn measure_slot<R: Rng + ?Sized>(
    scheduled: &[(TargetId, Point2D)],
    receivers: &[Receiver],
    acoustic: &AcousticParams,
    noise_max_offset: f64,
    slot: u64,
    rng: &mut R,
) -> Vec<AnonymousDistanceSet> {
    let r = acoustic.audible_range();
    receivers
        .iter()
        .map(|rx| {
            let in_range: Vec<(TargetId, f64)> = scheduled
                .iter()
                .map(|&(id, p)| (id, p.distance(rx.position)))
                .filter(|&(_, d)| d <= r)
                .collect();
            let arrivals: Vec<ArrivalEvent> = in_range
                .iter()
                .map(|&(source, d)| ArrivalEvent {
                    time: d / acoustic.sound_speed(),
                    source,
                })
                .collect();
            let mut distances: Vec<f64> = detect_arrivals(&arrivals, acoustic)
                .into_iter()
                .map(|i| in_range[i].1)
                .collect();
            if noise_max_offset > 0.0 {
                for d in &mut distances {
                    *d += rng.random::<f64>() * noise_max_offset;
                }
            }
            distances.shuffle(rng);
            AnonymousDistanceSet {
                receiver: rx.id,
                slot,
                distances,
            }
        })
        .collect()
}

/// True positions of all targets at one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub slot: u64,
    pub target: TargetId,
    pub position: Point2D,
}

/// A running scenario: receivers, moving targets and the measurement stream.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    receivers: Vec<Receiver>,
    motion: MotionModel,
    measure_rng: ChaCha8Rng,
    slot: u64,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let receivers = deploy_receivers(&config);
        let motion = MotionModel::new(&config)?;
        let measure_rng = stream_rng(config.seed, MEASURE_STREAM);
        Ok(Self {
            config,
            receivers,
            motion,
            measure_rng,
            slot: 0,
        })
    }

    pub fn with_motion(mut self, motion: MotionModel) -> Self {
        self.motion = motion;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn receivers(&self) -> &[Receiver] {
        &self.receivers
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn truth(&self) -> Vec<TruthRow> {
        self.motion
            .targets()
            .iter()
            .map(|t| TruthRow {
                slot: self.slot,
                target: t.id,
                position: t.position,
            })
            .collect()
    }

    pub fn position_of(&self, id: TargetId) -> Option<Point2D> {
        self.motion
            .targets()
            .iter()
            .find(|t| t.id == id)
            .map(|t| t.position)
    }

    /// Distances measured in the current slot when `ids` transmit.
    pub fn measure(&mut self, ids: &[TargetId]) -> Vec<AnonymousDistanceSet> {
        let scheduled: Vec<(TargetId, Point2D)> = ids
            .iter()
            .filter_map(|&id| self.position_of(id).map(|p| (id, p)))
            .collect();
        measure_slot(
            &scheduled,
            &self.receivers,
            &self.config.acoustic,
            self.config.noise_max_offset,
            self.slot,
            &mut self.measure_rng,
        )
    }

    pub fn advance(&mut self) {
        self.motion.step();
        self.slot += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::multi_detectable;

    fn one_target_config() -> ScenarioConfig {
        ScenarioConfig {
            n_targets: 1,
            speed_std: 0.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn straight_leg_kinematics() {
        let cfg = one_target_config();
        let mut m = MotionModel::new(&cfg)
            .unwrap()
            .with_targets(vec![TargetState {
                id: TargetId(0),
                position: Point2D::new(2.0, 5.0),
                heading: 0.0,
                speed: 1.0,
            }]);
        for _ in 0..10 {
            m.step();
        }
        let p = m.targets()[0].position;
        assert!((p.distance(Point2D::new(2.0, 5.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wall_reflects_heading() {
        let cfg = one_target_config();
        let mut m = MotionModel::new(&cfg)
            .unwrap()
            .with_targets(vec![TargetState {
                id: TargetId(0),
                position: Point2D::new(9.95, 5.0),
                heading: 0.0,
                speed: 1.0,
            }]);
        m.step();
        let t = m.targets()[0];
        assert!((t.position.x - 9.95).abs() < 1e-12);
        assert!((t.heading - PI).abs() < 1e-12);
        assert!(cfg.arena.contains(t.position));
    }

    #[test]
    fn motion_is_deterministic_and_bounded() {
        let cfg = ScenarioConfig {
            seed: 42,
            ..ScenarioConfig::default()
        };
        let mut a = MotionModel::new(&cfg).unwrap();
        let mut b = MotionModel::new(&cfg).unwrap();
        for _ in 0..500 {
            let before = a.positions();
            a.step();
            b.step();
            assert_eq!(a.positions(), b.positions());
            for ((_, p0), t) in before.iter().zip(a.targets()) {
                assert!(cfg.arena.contains(t.position));
                assert!(p0.distance(t.position) <= t.speed * cfg.slot_length + 1e-9);
            }
        }
    }

    #[test]
    fn grid_layout_includes_border() {
        let r = deploy_receivers(&ScenarioConfig::default());
        assert_eq!(r.len(), 36);
        assert!(r.iter().any(|x| x.position == Point2D::new(10.0, 10.0)));
    }

    #[test]
    fn poisson_layout_is_seeded() {
        let cfg = ScenarioConfig {
            receivers: ReceiverLayout::Poisson { density: 0.25 },
            seed: 9,
            ..ScenarioConfig::default()
        };
        let a = deploy_receivers(&cfg);
        assert_eq!(a, deploy_receivers(&cfg));
        assert!(a.iter().all(|r| cfg.arena.contains(r.position)));
    }

    fn rx(x: f64, y: f64) -> Vec<Receiver> {
        vec![Receiver {
            id: ReceiverId(0),
            position: Point2D::new(x, y),
        }]
    }

    #[test]
    fn single_target_reports_true_distance() {
        let p = AcousticParams::default();
        let mut rng = stream_rng(1, 0);
        let out = measure_slot(
            &[(TargetId(0), Point2D::new(1.0, 2.0))],
            &rx(0.0, 0.0),
            &p,
            0.0,
            0,
            &mut rng,
        );
        assert_eq!(
            out[0].distances,
            vec![Point2D::new(1.0, 2.0).distance(Point2D::ORIGIN)]
        );
    }

    #[test]
    fn equidistant_targets_give_one_distance() {
        let p = AcousticParams::default();
        let mut rng = stream_rng(1, 0);
        let s = [
            (TargetId(0), Point2D::new(1.0, 0.0)),
            (TargetId(1), Point2D::new(0.0, 1.0)),
        ];
        let out = measure_slot(&s, &rx(0.0, 0.0), &p, 0.0, 0, &mut rng);
        assert_eq!(out[0].distances, vec![1.0]);
    }

    #[test]
    fn close_gap_keeps_nearer_distance() {
        let p = AcousticParams::default();
        let mut rng = stream_rng(1, 0);
        let s = [
            (TargetId(0), Point2D::new(1.2, 0.0)),
            (TargetId(1), Point2D::new(0.0, 1.0)),
        ];
        let out = measure_slot(&s, &rx(0.0, 0.0), &p, 0.0, 0, &mut rng);
        assert_eq!(out[0].distances, vec![1.0]);
    }

    #[test]
    fn noise_is_positive_and_bounded() {
        let p = AcousticParams::default();
        let mut rng = stream_rng(1, 0);
        for _ in 0..1000 {
            let out = measure_slot(
                &[(TargetId(0), Point2D::new(1.0, 0.0))],
                &rx(0.0, 0.0),
                &p,
                0.05,
                0,
                &mut rng,
            );
            let d = out[0].distances[0];
            assert!((1.0..=1.05).contains(&d));
        }
    }

    #[test]
    fn noiseless_counts_match_detection_model() {
        let cfg = ScenarioConfig {
            seed: 3,
            ..ScenarioConfig::default()
        };
        let mut sc = Scenario::new(cfg.clone()).unwrap();
        let ids: Vec<TargetId> = (0..10).map(TargetId).collect();
        for _ in 0..50 {
            let truth = sc.truth();
            let pts: Vec<Point2D> = truth.iter().map(|t| t.position).collect();
            let sets = sc.measure(&ids);
            for (set, receiver) in sets.iter().zip(sc.receivers()) {
                let expected = multi_detectable(&pts, receiver.position, &cfg.acoustic)
                    .iter()
                    .filter(|&&f| f)
                    .count();
                assert_eq!(set.distances.len(), expected);
                for d in &set.distances {
                    assert!(pts.iter().any(|p| p.distance(receiver.position) == *d));
                }
            }
            sc.advance();
        }
    }

    #[test]
    fn validation_names_fields() {
        let cfg = ScenarioConfig {
            slot_length: -1.0,
            ..ScenarioConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "slot_length"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
