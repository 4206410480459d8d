//! The slot loop: schedule, measure, locate, filter, advance.

use std::collections::BTreeMap;

use crate::detection::multi_detectable;
use crate::error::{Error, Result};
use crate::geometry::{AcousticParams, Point2D};
use crate::ids::TargetId;
use crate::locating::{
    generate_candidates, label_all, label_distances, LocatorConfig, PriorPosition,
};
use crate::scenario::{AnonymousDistanceSet, Receiver, Scenario, TruthRow};
use crate::scheduler::{build_schedule, SlotKind};
use crate::tracking::{EstimateKind, FilterConfig, TargetFilter};

use super::io::{DistanceRow, ErrorRow, EstimateRow, ScheduleRow};
use super::metrics::{error_rows, summarize, MetricsReport};
use super::ExperimentConfig;

#[derive(Debug, Clone)]
struct TrackState {
    filter: Option<TargetFilter>,
    last_slot: u64,
    lost: bool,
    /// Consecutive located slots that failed the agreement check.
    suspect: u32,
}

impl TrackState {
    fn is_tracked(&self) -> bool {
        self.filter.is_some() && !self.lost
    }
}

/// Declares a track lost when too few of the receivers that should have
/// heard its estimate report a matching distance.
///
/// Three anonymous distances always trilaterate somewhere, so a track that
/// latched onto other targets' distances keeps producing located estimates.
/// The receivers expected to hear a target are those in range of its estimate
/// and not masked by the other estimates of the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementCheck {
    pub acoustic: AcousticParams,
    /// Fraction of expected receivers that must agree.
    pub min_fraction: f64,
    /// Consecutive failing slots before the track is dropped.
    pub patience: u32,
}

/// Per-target filters plus the bookkeeping shared by live runs and replays.
#[derive(Debug, Clone)]
pub struct MultiTargetTracker {
    receivers: Vec<Receiver>,
    locator: LocatorConfig,
    filter: FilterConfig,
    agreement: Option<AgreementCheck>,
    targets: BTreeMap<TargetId, TrackState>,
    loss_events: usize,
}

impl MultiTargetTracker {
    pub fn new(
        ids: impl IntoIterator<Item = TargetId>,
        receivers: Vec<Receiver>,
        locator: LocatorConfig,
        filter: FilterConfig,
    ) -> Self {
        let targets = ids
            .into_iter()
            .map(|id| {
                (
                    id,
                    TrackState {
                        filter: None,
                        last_slot: 0,
                        lost: false,
                        suspect: 0,
                    },
                )
            })
            .collect();
        Self {
            receivers,
            locator,
            filter,
            agreement: None,
            targets,
            loss_events: 0,
        }
    }

    pub fn with_agreement_check(mut self, check: AgreementCheck) -> Self {
        self.agreement = Some(check);
        self
    }

    /// Targets with a live filter and their latest estimates.
    pub fn known(&self) -> Vec<(TargetId, Point2D)> {
        self.targets
            .iter()
            .filter(|(_, s)| s.is_tracked())
            .map(|(id, s)| (*id, s.filter.as_ref().expect("tracked").estimate()))
            .collect()
    }

    /// Targets never located or currently lost.
    pub fn unknown(&self) -> Vec<TargetId> {
        self.targets
            .iter()
            .filter(|(_, s)| !s.is_tracked())
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn loss_events(&self) -> usize {
        self.loss_events
    }

    /// Feed one slot's measurements for the targets that transmitted in it.
    pub fn process_slot(
        &mut self,
        slot: u64,
        scheduled: &[TargetId],
        sets: &[AnonymousDistanceSet],
    ) -> Vec<EstimateRow> {
        let mut priors = Vec::new();
        for id in scheduled {
            if let Some(state) = self.targets.get(id).filter(|s| s.is_tracked()) {
                let elapsed = slot.saturating_sub(state.last_slot).max(1);
                priors.push(PriorPosition {
                    target: *id,
                    position: state.filter.as_ref().expect("tracked").estimate(),
                    elapsed_slots: u32::try_from(elapsed).unwrap_or(u32::MAX),
                });
            }
        }
        let labels = label_distances(sets, &priors, &self.receivers, &self.locator);

        let mut rows = Vec::new();
        for prior in &priors {
            let cands = generate_candidates(
                &labels,
                prior.target,
                Some(prior),
                &self.receivers,
                &self.locator,
            );
            let state = self
                .targets
                .get_mut(&prior.target)
                .expect("prior from known target");
            let filter = state.filter.as_mut().expect("tracked");
            let out = filter.step(&cands, prior.elapsed_slots);
            state.last_slot = slot;
            if filter.is_lost() {
                state.lost = true;
                self.loss_events += 1;
            }
            rows.push(EstimateRow {
                slot,
                target: prior.target,
                x: out.estimate.x,
                y: out.estimate.y,
                kind: out.kind,
            });
        }

        if let Some(check) = self.agreement {
            self.check_agreement(&check, &rows, sets);
        }

        // An untracked target can only be bootstrapped when it is alone.
        if let [id] = scheduled {
            if self.targets.get(id).is_some_and(|s| !s.is_tracked()) {
                let labels = label_all(sets, *id);
                let cands = generate_candidates(&labels, *id, None, &self.receivers, &self.locator);
                if let Some(best) = cands.first() {
                    let state = self.targets.get_mut(id).expect("checked");
                    match state.filter.as_mut() {
                        Some(f) => f.restart(best.position),
                        None => {
                            state.filter = Some(TargetFilter::new(
                                *id,
                                best.position,
                                self.locator.step_bound,
                                self.filter,
                            ))
                        }
                    }
                    state.lost = false;
                    state.suspect = 0;
                    state.last_slot = slot;
                    rows.push(EstimateRow {
                        slot,
                        target: *id,
                        x: best.position.x,
                        y: best.position.y,
                        kind: EstimateKind::Located,
                    });
                }
            }
        }
        rows
    }

    fn check_agreement(
        &mut self,
        check: &AgreementCheck,
        rows: &[EstimateRow],
        sets: &[AnonymousDistanceSet],
    ) {
        let positions: Vec<Point2D> = rows.iter().map(EstimateRow::position).collect();
        let tol = self.locator.consistency_tolerance;
        let mut expected = vec![0usize; rows.len()];
        let mut agreed = vec![0usize; rows.len()];
        for rx in &self.receivers {
            let heard = multi_detectable(&positions, rx.position, &check.acoustic);
            let measured = sets
                .iter()
                .find(|s| s.receiver == rx.id)
                .map_or(&[][..], |s| s.distances.as_slice());
            for (i, at) in positions.iter().enumerate() {
                if !heard[i] {
                    continue;
                }
                expected[i] += 1;
                let d = at.distance(rx.position);
                if measured.iter().any(|m| (m - d).abs() <= tol) {
                    agreed[i] += 1;
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.kind != EstimateKind::Located || expected[i] < 3 {
                continue;
            }
            let state = self
                .targets
                .get_mut(&row.target)
                .expect("row for known target");
            if state.lost {
                continue;
            }
            if (agreed[i] as f64) < check.min_fraction * expected[i] as f64 {
                state.suspect += 1;
                if state.suspect >= check.patience {
                    state.lost = true;
                    state.suspect = 0;
                    self.loss_events += 1;
                }
            } else {
                state.suspect = 0;
            }
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub truth: Vec<TruthRow>,
    pub estimates: Vec<EstimateRow>,
    pub errors: Vec<ErrorRow>,
    pub schedule: Vec<ScheduleRow>,
    pub distances: Vec<DistanceRow>,
    pub receivers: Vec<Receiver>,
    pub report: MetricsReport,
}

fn build_tracker(
    ids: impl IntoIterator<Item = TargetId>,
    receivers: Vec<Receiver>,
    config: &ExperimentConfig,
) -> MultiTargetTracker {
    let t = &config.tracker;
    let tracker = MultiTargetTracker::new(ids, receivers, t.locator(&config.scenario), t.filter());
    if t.agreement_fraction > 0.0 {
        tracker.with_agreement_check(AgreementCheck {
            acoustic: config.scenario.acoustic,
            min_fraction: t.agreement_fraction,
            patience: t.agreement_patience,
        })
    } else {
        tracker
    }
}

/// Simulate the bootstrap round plus `config.slots` further slots.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let d_s = config.separation.resolve(&config.scenario)?;
    let mut scenario = Scenario::new(config.scenario.clone())?;
    let ids: Vec<TargetId> = scenario.truth().iter().map(|t| t.target).collect();
    let mut tracker = build_tracker(ids.iter().copied(), scenario.receivers().to_vec(), config);
    let total = ids.len() as u64 + config.slots;

    let mut truth = Vec::new();
    let mut estimates = Vec::new();
    let mut schedule = Vec::new();
    let mut distances = Vec::new();
    let mut round = 0u64;
    while scenario.slot() < total {
        let plan = build_schedule(&tracker.known(), &tracker.unknown(), d_s)?;
        for slot in &plan.slots {
            if scenario.slot() >= total {
                break;
            }
            let now = scenario.slot();
            schedule.push(ScheduleRow::new(round, now, slot.kind, &slot.targets));
            truth.extend(scenario.truth());
            let sets = scenario.measure(&slot.targets);
            for set in &sets {
                distances.extend(set.distances.iter().map(|&d| DistanceRow {
                    slot: now,
                    receiver: set.receiver,
                    distance: d,
                }));
            }
            estimates.extend(tracker.process_slot(now, &slot.targets, &sets));
            scenario.advance();
        }
        round += 1;
    }
    let errors = error_rows(&estimates, &truth)?;
    let report = summarize(&errors, &schedule, tracker.loss_events(), d_s)?;
    Ok(RunArtifacts {
        truth,
        estimates,
        errors,
        schedule,
        distances,
        receivers: scenario.receivers().to_vec(),
        report,
    })
}

/// Recorded inputs for re-running the locator and filters offline.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayInput {
    pub receivers: Vec<Receiver>,
    pub schedule: Vec<ScheduleRow>,
    pub distances: Vec<DistanceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    pub estimates: Vec<EstimateRow>,
    pub loss_events: usize,
}

/// Re-run tracking on recorded distances, following the recorded schedule.
pub fn replay(input: &ReplayInput, config: &ExperimentConfig) -> Result<ReplayOutput> {
    config.validate()?;
    let mut ids: Vec<TargetId> = Vec::new();
    for row in &input.schedule {
        ids.extend(row.targets()?);
    }
    ids.sort();
    ids.dedup();
    let mut tracker = build_tracker(ids, input.receivers.clone(), config);

    let mut by_slot: BTreeMap<u64, BTreeMap<crate::ids::ReceiverId, Vec<f64>>> = BTreeMap::new();
    for d in &input.distances {
        by_slot
            .entry(d.slot)
            .or_default()
            .entry(d.receiver)
            .or_default()
            .push(d.distance);
    }
    let mut out = Vec::new();
    let mut last: Option<u64> = None;
    for row in &input.schedule {
        if last.is_some_and(|l| row.slot_index <= l) {
            return Err(Error::InvalidInput(format!(
                "schedule slots must increase, saw {} after {:?}",
                row.slot_index, last
            )));
        }
        last = Some(row.slot_index);
        let sets: Vec<AnonymousDistanceSet> = by_slot
            .remove(&row.slot_index)
            .unwrap_or_default()
            .into_iter()
            .map(|(receiver, distances)| AnonymousDistanceSet {
                receiver,
                slot: row.slot_index,
                distances,
            })
            .collect();
        let targets = row.targets()?;
        if row.kind == SlotKind::Exclusive && targets.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "exclusive slot {} lists {} targets",
                row.slot_index,
                targets.len()
            )));
        }
        out.extend(tracker.process_slot(row.slot_index, &targets, &sets));
    }
    if let Some((slot, _)) = by_slot.into_iter().next() {
        return Err(Error::Alignment(format!(
            "distances recorded for unscheduled slot {slot}"
        )));
    }
    Ok(ReplayOutput {
        estimates: out,
        loss_events: tracker.loss_events(),
    })
}
