//! Consistent position generation from anonymous distances.
//!
//! Distances are first labeled with every target whose previous position
//! predicts them within the per-slot displacement bound. Triples of labeled
//! distances from distinct receivers are trilaterated, implausible results
//! are dropped, and the rest are ranked by how well they explain all of the
//! target's labeled distances.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::ids::{ReceiverId, TargetId};
use crate::scenario::{AnonymousDistanceSet, Arena, Receiver};

/// A distance with the set of targets that may have produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDistance {
    pub receiver: ReceiverId,
    pub distance: f64,
    pub candidates: Vec<TargetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePosition {
    pub target: TargetId,
    pub position: Point2D,
    /// Mean squared range residue, m^2.
    pub residue: f64,
    /// Receivers with a labeled distance within the consistency tolerance.
    pub consistent: usize,
    pub support: Vec<(ReceiverId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatorConfig {
    /// Largest displacement of a target between consecutive slots, meters.
    pub step_bound: f64,
    /// Candidates kept per target.
    pub max_candidates: usize,
    /// Cap on trilaterated triples per target and slot.
    pub max_combinations: usize,
    /// Candidates outside the arena grown by `arena_margin` are dropped.
    pub arena: Option<Arena>,
    pub arena_margin: f64,
    /// Candidates whose residue exceeds the best one by more than this are
    /// dropped, m^2.
    pub residue_slack: f64,
    /// Range error beyond which a labeled distance counts as inconsistent
    /// with a candidate; each receiver contributes at most its square.
    pub consistency_tolerance: f64,
}

impl LocatorConfig {
    /// Displacement bound from the speed distribution: mean plus four
    /// standard deviations over one slot.
    pub fn step_bound_for(speed_mean: f64, speed_std: f64, slot_length: f64) -> f64 {
        (speed_mean + 4.0 * speed_std) * slot_length
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_bound.is_finite() && self.step_bound > 0.0) {
            return Err(Error::Config {
                field: "step_bound".into(),
                reason: format!("must be positive, got {}", self.step_bound),
            });
        }
        if self.max_candidates == 0 {
            return Err(Error::Config {
                field: "max_candidates".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.max_combinations == 0 {
            return Err(Error::Config {
                field: "max_combinations".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

impl Default for LocatorConfig {
    fn default() -> Self {
        Self {
            step_bound: Self::step_bound_for(1.0, 0.1, 0.1),
            max_candidates: 5,
            max_combinations: 200,
            arena: None,
            arena_margin: 0.0,
            residue_slack: f64::INFINITY,
            consistency_tolerance: Self::step_bound_for(1.0, 0.1, 0.1),
        }
    }
}

/// Last estimate of a target and how many slots ago it was made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorPosition {
    pub target: TargetId,
    pub position: Point2D,
    pub elapsed_slots: u32,
}

impl PriorPosition {
    /// How far the target may have moved since the prior.
    pub fn reach(&self, config: &LocatorConfig) -> f64 {
        config.step_bound * f64::from(self.elapsed_slots.max(1))
    }
}

fn receiver_index(receivers: &[Receiver]) -> HashMap<ReceiverId, Point2D> {
    receivers.iter().map(|r| (r.id, r.position)).collect()
}

/// Label each measured distance with every prior it is consistent with:
/// `|D - d(receiver, prior)| <= reach`.
pub fn label_distances(
    sets: &[AnonymousDistanceSet],
    priors: &[PriorPosition],
    receivers: &[Receiver],
    config: &LocatorConfig,
) -> Vec<LabeledDistance> {
    let index = receiver_index(receivers);
    let mut out = Vec::new();
    for set in sets {
        let Some(&rx) = index.get(&set.receiver) else {
            continue;
        };
        for &distance in &set.distances {
            let candidates = priors
                .iter()
                .filter(|p| (distance - rx.distance(p.position)).abs() <= p.reach(config))
                .map(|p| p.target)
                .collect();
            out.push(LabeledDistance {
                receiver: set.receiver,
                distance,
                candidates,
            });
        }
    }
    out
}

/// Attribute every distance to `target`; used when it transmits alone.
pub fn label_all(sets: &[AnonymousDistanceSet], target: TargetId) -> Vec<LabeledDistance> {
    sets.iter()
        .flat_map(|set| {
            set.distances.iter().map(move |&distance| LabeledDistance {
                receiver: set.receiver,
                distance,
                candidates: vec![target],
            })
        })
        .collect()
}

/// Mean squared difference between measured and implied distances.
pub fn self_consistency(x: Point2D, supports: &[(Point2D, f64)]) -> f64 {
    if supports.is_empty() {
        return 0.0;
    }
    supports
        .iter()
        .map(|&(rx, d)| (d - x.distance(rx)).powi(2))
        .sum::<f64>()
        / supports.len() as f64
}

fn solve_2x2(m: [[f64; 2]; 2], v: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (v[0] * m[1][1] - m[0][1] * v[1]) / det,
        (m[0][0] * v[1] - m[1][0] * v[0]) / det,
    ])
}

/// Ratio of the smaller to the larger eigenvalue of a symmetric 2x2 matrix.
fn conditioning(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let hi = tr / 2.0 + disc;
    let lo = tr / 2.0 - disc;
    if hi <= 0.0 {
        0.0
    } else {
        lo / hi
    }
}

const MIN_CONDITIONING: f64 = 1e-8;

/// Least-squares position from `(receiver position, distance)` pairs.
///
/// The first circle equation is subtracted from the others to get a linear
/// system, and the solution is polished with one Gauss-Newton step on the
/// range residuals (kept only if it lowers the cost).
pub fn trilaterate(supports: &[(Point2D, f64)]) -> Result<Point2D> {
    if supports.len() < 3 {
        return Err(Error::DegenerateGeometry("need at least three ranges"));
    }
    let (r0, d0) = supports[0];
    let mut ata = [[0.0; 2]; 2];
    let mut atb = [0.0; 2];
    for &(ri, di) in &supports[1..] {
        let row = [2.0 * (ri.x - r0.x), 2.0 * (ri.y - r0.y)];
        let rhs = d0 * d0 - di * di + (ri.x * ri.x + ri.y * ri.y) - (r0.x * r0.x + r0.y * r0.y);
        for a in 0..2 {
            for b in 0..2 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * rhs;
        }
    }
    if conditioning(ata) < MIN_CONDITIONING {
        return Err(Error::DegenerateGeometry("receivers are collinear"));
    }
    let sol = solve_2x2(ata, atb).ok_or(Error::DegenerateGeometry("singular normal equations"))?;
    let linear = Point2D::new(sol[0], sol[1]);

    let mut jtj = [[0.0; 2]; 2];
    let mut jte = [0.0; 2];
    for &(ri, di) in supports {
        let rho = linear.distance(ri);
        if rho < 1e-12 {
            return Ok(linear);
        }
        let j = [(linear.x - ri.x) / rho, (linear.y - ri.y) / rho];
        let e = di - rho;
        for a in 0..2 {
            for b in 0..2 {
                jtj[a][b] += j[a] * j[b];
            }
            jte[a] += j[a] * e;
        }
    }
    let refined = match solve_2x2(jtj, jte) {
        Some(step) => linear.offset(step[0], step[1]),
        None => return Ok(linear),
    };
    if self_consistency(refined, supports) < self_consistency(linear, supports) {
        Ok(refined)
    } else {
        Ok(linear)
    }
}

/// Positions consistent with ranges from receivers on one line.
///
/// Collinear receivers fix the position along the line and its distance from
/// it, leaving a mirror pair; one point is returned when the target sits on
/// the line. Errors when the receivers are not collinear or coincide.
pub fn trilaterate_collinear(supports: &[(Point2D, f64)]) -> Result<Vec<Point2D>> {
    if supports.len() < 2 {
        return Err(Error::DegenerateGeometry("need at least two ranges"));
    }
    let (r0, d0) = supports[0];
    let far = supports
        .iter()
        .map(|&(r, _)| r)
        .max_by(|a, b| a.distance(r0).total_cmp(&b.distance(r0)))
        .expect("non-empty");
    let span = far.distance(r0);
    if span < 1e-9 {
        return Err(Error::DegenerateGeometry("receivers coincide"));
    }
    let u = ((far.x - r0.x) / span, (far.y - r0.y) / span);
    let n = (-u.1, u.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for &(ri, di) in &supports[1..] {
        let (dx, dy) = (ri.x - r0.x, ri.y - r0.y);
        if (dx * n.0 + dy * n.1).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::DegenerateGeometry("receivers are not collinear"));
        }
        let t = dx * u.0 + dy * u.1;
        num += t * (d0 * d0 - di * di + t * t);
        den += 2.0 * t * t;
    }
    let s = num / den;
    let h2 = supports
        .iter()
        .map(|&(ri, di)| {
            let t = (ri.x - r0.x) * u.0 + (ri.y - r0.y) * u.1;
            di * di - (s - t).powi(2)
        })
        .sum::<f64>()
        / supports.len() as f64;
    let base = r0.offset(s * u.0, s * u.1);
    if h2 <= 0.0 {
        return Ok(vec![base]);
    }
    let h = h2.sqrt();
    Ok(vec![
        base.offset(h * n.0, h * n.1),
        base.offset(-h * n.0, -h * n.1),
    ])
}

#[derive(Debug, Clone, Copy)]
struct Pooled {
    receiver: ReceiverId,
    at: Point2D,
    distance: f64,
    deviation: f64,
}

/// Residue of `x` against the pool: per receiver, the squared error of the
/// labeled distance that best matches `x`, capped at `cap` so a distance
/// inconsistent with `x` counts as a miss rather than pulling the score.
/// Also returns how many receivers stayed under the cap.
fn pool_residue(x: Point2D, pool: &[Pooled], cap: f64) -> (f64, usize) {
    let mut best: Vec<(ReceiverId, f64)> = Vec::new();
    for p in pool {
        let e = (p.distance - x.distance(p.at)).powi(2);
        match best.iter_mut().find(|(r, _)| *r == p.receiver) {
            Some((_, b)) => *b = b.min(e),
            None => best.push((p.receiver, e)),
        }
    }
    if best.is_empty() {
        return (0.0, 0);
    }
    let consistent = best.iter().filter(|(_, e)| *e <= cap).count();
    let sum: f64 = best.iter().map(|(_, e)| e.min(cap)).sum();
    (sum / best.len() as f64, consistent)
}

/// Candidate positions for `target`, best residue first, at most
/// `max_candidates` of them. Empty when fewer than three receivers carry a
/// distance labeled to the target.
pub fn generate_candidates(
    labeled: &[LabeledDistance],
    target: TargetId,
    prior: Option<&PriorPosition>,
    receivers: &[Receiver],
    config: &LocatorConfig,
) -> Vec<CandidatePosition> {
    let index = receiver_index(receivers);
    let mut pool: Vec<Pooled> = labeled
        .iter()
        .filter(|l| l.candidates.contains(&target))
        .filter_map(|l| {
            let at = *index.get(&l.receiver)?;
            let deviation = prior.map_or(0.0, |p| (l.distance - at.distance(p.position)).abs());
            Some(Pooled {
                receiver: l.receiver,
                at,
                distance: l.distance,
                deviation,
            })
        })
        .collect();
    pool.sort_by(|a, b| {
        a.deviation
            .total_cmp(&b.deviation)
            .then(a.receiver.cmp(&b.receiver))
            .then(a.distance.total_cmp(&b.distance))
    });

    let mut distinct: Vec<ReceiverId> = pool.iter().map(|p| p.receiver).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 3 {
        return Vec::new();
    }

    let reach = prior.map(|p| p.reach(config));
    let mut out: Vec<CandidatePosition> = Vec::new();
    let mut tried = 0usize;
    // Colex order: every triple among the first m pooled distances is tried
    // before any triple that uses distance m + 1.
    'outer: for k in 2..pool.len() {
        for j in 1..k {
            if pool[j].receiver == pool[k].receiver {
                continue;
            }
            for i in 0..j {
                if pool[i].receiver == pool[j].receiver || pool[i].receiver == pool[k].receiver {
                    continue;
                }
                if tried >= config.max_combinations {
                    break 'outer;
                }
                tried += 1;
                let triple = [pool[i], pool[j], pool[k]];
                let supports: Vec<(Point2D, f64)> =
                    triple.iter().map(|p| (p.at, p.distance)).collect();
                let positions = match trilaterate(&supports) {
                    Ok(p) => vec![p],
                    // A mirror pair is only useful when the arena can rule
                    // one side out.
                    Err(_) if config.arena.is_some() => {
                        trilaterate_collinear(&supports).unwrap_or_default()
                    }
                    Err(_) => continue,
                };
                for position in positions {
                    if !position.is_finite() {
                        continue;
                    }
                    if let Some(arena) = config.arena {
                        let m = config.arena_margin;
                        if position.x < -m
                            || position.y < -m
                            || position.x > arena.width + m
                            || position.y > arena.height + m
                        {
                            continue;
                        }
                    }
                    if let (Some(p), Some(reach)) = (prior, reach) {
                        if position.distance(p.position) > reach {
                            continue;
                        }
                    }
                    let (residue, consistent) =
                        pool_residue(position, &pool, config.consistency_tolerance.powi(2));
                    if let Some(dup) = out
                        .iter_mut()
                        .find(|c| c.position.distance(position) < 1e-9)
                    {
                        if residue < dup.residue {
                            dup.residue = residue;
                            dup.consistent = consistent;
                        }
                        continue;
                    }
                    out.push(CandidatePosition {
                        target,
                        position,
                        residue,
                        consistent,
                        support: triple.iter().map(|p| (p.receiver, p.distance)).collect(),
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.residue.partial_cmp(&b.residue).unwrap_or(Ordering::Equal));
    // Agreement with more receivers beats a marginally lower residue.
    if let Some(most) = out.iter().map(|c| c.consistent).max() {
        out.retain(|c| c.consistent == most);
    }
    if let Some(best) = out.first().map(|c| c.residue) {
        out.retain(|c| c.residue <= best + config.residue_slack);
    }
    out.truncate(config.max_candidates);
    out
}
