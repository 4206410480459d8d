//! Location-based time-slot assignment.
//!
//! Targets whose positions are known are split into groups whose members are
//! pairwise at least `d_s` apart; each group shares one slot. Targets with
//! unknown (or lost) positions each get a slot of their own.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::Point2D;
use crate::ids::TargetId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    /// A separated group of targets with known positions.
    Shared,
    /// A single target whose position is unknown or lost.
    Exclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub targets: Vec<TargetId>,
}

/// One scheduling round: every target appears in exactly one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotSchedule {
    pub slots: Vec<Slot>,
}

impl SlotSchedule {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn target_count(&self) -> usize {
        self.slots.iter().map(|s| s.targets.len()).sum()
    }
}

fn check_separation(d_s: f64) -> Result<()> {
    ensure_finite(d_s, "separation distance")?;
    if d_s <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "separation distance must be positive, got {d_s}"
        )));
    }
    Ok(())
}

/// Closest pair in `set` (indices into `set`), ties broken by the smaller id
/// pair.
fn closest_pair(set: &[(TargetId, Point2D)]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            let d = set[i].1.distance(set[j].1);
            let key = |a: usize, b: usize| {
                let (x, y) = (set[a].0, set[b].0);
                if x < y {
                    (x, y)
                } else {
                    (y, x)
                }
            };
            best = match best {
                None => Some((i, j, d)),
                Some((bi, bj, bd)) if d < bd || (d == bd && key(i, j) < key(bi, bj)) => {
                    Some((i, j, d))
                }
                keep => keep,
            };
        }
    }
    best
}

/// Distance from `set[idx]` to its second-nearest neighbour in `set`.
fn second_nearest(set: &[(TargetId, Point2D)], idx: usize) -> Option<f64> {
    let mut ds: Vec<f64> = set
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != idx)
        .map(|(_, p)| p.1.distance(set[idx].1))
        .collect();
    if ds.len() < 2 {
        return None;
    }
    ds.sort_by(f64::total_cmp);
    Some(ds[1])
}

/// Greedy partition into `d_s`-separated groups.
///
/// While the working set has a pair closer than `d_s`, one member of the
/// closest pair is moved to the next working set: the one whose
/// second-nearest neighbour is closer (it sits in the denser spot), or the
/// larger id on a tie. The remaining set is emitted as a group and the
/// procedure repeats on the evicted targets.
pub fn divide_closest_targets(
    targets: &[(TargetId, Point2D)],
    d_s: f64,
) -> Result<Vec<Vec<TargetId>>> {
    check_separation(d_s)?;
    let mut working: Vec<(TargetId, Point2D)> = targets.to_vec();
    working.sort_by_key(|t| t.0);
    let mut groups = Vec::new();
    while !working.is_empty() {
        let mut evicted = Vec::new();
        while let Some((i, j, d)) = closest_pair(&working) {
            if d >= d_s {
                break;
            }
            let victim = match (second_nearest(&working, i), second_nearest(&working, j)) {
                (Some(di), Some(dj)) if di < dj => i,
                (Some(di), Some(dj)) if dj < di => j,
                _ => {
                    if working[i].0 > working[j].0 {
                        i
                    } else {
                        j
                    }
                }
            };
            evicted.push(working.remove(victim));
        }
        groups.push(working.iter().map(|t| t.0).collect());
        evicted.sort_by_key(|t| t.0);
        working = evicted;
    }
    Ok(groups)
}

/// One shared slot per separated group of `known` targets, then one exclusive
/// slot per `unknown` target.
pub fn build_schedule(
    known: &[(TargetId, Point2D)],
    unknown: &[TargetId],
    d_s: f64,
) -> Result<SlotSchedule> {
    let mut slots: Vec<Slot> = divide_closest_targets(known, d_s)?
        .into_iter()
        .map(|targets| Slot {
            kind: SlotKind::Shared,
            targets,
        })
        .collect();
    let mut unknown = unknown.to_vec();
    unknown.sort();
    slots.extend(unknown.into_iter().map(|t| Slot {
        kind: SlotKind::Exclusive,
        targets: vec![t],
    }));
    Ok(SlotSchedule { slots })
}

/// Smallest pairwise distance in a group, `None` for fewer than two members.
pub fn min_pairwise_distance(points: &[Point2D]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].distance(points[j]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(points: &[(f64, f64)]) -> Vec<(TargetId, Point2D)> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (TargetId(i as u32 + 1), Point2D::new(x, y)))
            .collect()
    }

    #[test]
    fn separated_input_is_one_group() {
        let t = labeled(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)]);
        let g = divide_closest_targets(&t, 2.5).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 4);
    }

    #[test]
    fn close_pair_splits() {
        let t = labeled(&[(0.0, 0.0), (1.0, 0.0)]);
        let g = divide_closest_targets(&t, 2.0).unwrap();
        assert_eq!(g, vec![vec![TargetId(1)], vec![TargetId(2)]]);
    }

    #[test]
    fn two_cluster_instance_gives_two_groups() {
        // Two tight pairs and one loner: each pair loses one member.
        let t = labeled(&[(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (5.0, 0.0), (2.5, 3.0)]);
        let g = divide_closest_targets(&t, 2.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].len() + g[1].len(), 5);
        let sched = build_schedule(&t, &[TargetId(6)], 2.0).unwrap();
        assert_eq!(sched.len(), 3);
        assert_eq!(sched.slots[2].kind, SlotKind::Exclusive);
        assert_eq!(sched.slots[2].targets, vec![TargetId(6)]);
    }

    #[test]
    fn bootstrap_gives_exclusive_slots() {
        let ids: Vec<TargetId> = (0..10).map(TargetId).collect();
        let sched = build_schedule(&[], &ids, 2.0).unwrap();
        assert_eq!(sched.len(), 10);
        assert!(sched
            .slots
            .iter()
            .all(|s| s.kind == SlotKind::Exclusive && s.targets.len() == 1));
    }

    #[test]
    fn all_known_and_separated_share_one_slot() {
        let t = labeled(&[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0), (10.0, 10.0)]);
        let sched = build_schedule(&t, &[], 4.0).unwrap();
        assert_eq!(sched.len(), 1);
        assert_eq!(sched.target_count(), 5);
    }

    #[test]
    fn eviction_prefers_crowded_member() {
        // 2 and 3 are the closest pair; 3 also has 4 close by, so 3 goes.
        let t = labeled(&[(-10.0, 0.0), (0.0, 0.0), (0.5, 0.0), (1.2, 0.0)]);
        let g = divide_closest_targets(&t, 1.0).unwrap();
        assert!(g[0].contains(&TargetId(2)));
        assert!(!g[0].contains(&TargetId(3)));
    }

    #[test]
    fn rejects_bad_separation() {
        assert!(divide_closest_targets(&[], 0.0).is_err());
        assert!(divide_closest_targets(&[], f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn groups_partition_and_are_separated(
            pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..15),
            d_s in 0.1f64..6.0,
        ) {
            let t = labeled(&pts);
            let groups = divide_closest_targets(&t, d_s).unwrap();
            let mut seen: Vec<TargetId> = groups.iter().flatten().copied().collect();
            seen.sort();
            let mut ids: Vec<TargetId> = t.iter().map(|p| p.0).collect();
            ids.sort();
            prop_assert_eq!(seen, ids);
            prop_assert!(groups.len() <= t.len().max(1));
            for g in &groups {
                prop_assert!(!g.is_empty() || t.is_empty());
                let pos: Vec<Point2D> = g.iter().map(|id| t.iter().find(|p| p.0 == *id).unwrap().1).collect();
                if let Some(m) = min_pairwise_distance(&pos) {
                    prop_assert!(m >= d_s);
                }
            }
            prop_assert_eq!(groups.clone(), divide_closest_targets(&t, d_s).unwrap());
        }
    }
}
