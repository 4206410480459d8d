//! Deterministic fixtures shared by the benchmarks.

use chorus_core::locating::{CandidatePosition, LabeledDistance};
use chorus_core::scenario::Receiver;
use chorus_core::{Point2D, ReceiverId, TargetId};

/// Square receiver grid, `n` by `n`, at `spacing` meters.
pub fn grid(n: u32, spacing: f64) -> Vec<Receiver> {
    (0..n * n)
        .map(|i| Receiver {
            id: ReceiverId(i),
            position: Point2D::new(f64::from(i % n) * spacing, f64::from(i / n) * spacing),
        })
        .collect()
}

/// `n` points spread over a `side` square by a low-discrepancy sequence.
pub fn scatter(n: u32, side: f64) -> Vec<(TargetId, Point2D)> {
    const G1: f64 = 0.754_877_666_246_692_7;
    const G2: f64 = 0.569_840_290_998_053_3;
    (0..n)
        .map(|i| {
            let k = f64::from(i) + 0.5;
            let p = Point2D::new((k * G1).fract() * side, (k * G2).fract() * side);
            (TargetId(i), p)
        })
        .collect()
}

/// Exact ranges from every receiver within `range` of some target, each
/// labeled with every target, as in a bootstrap-free worst case.
pub fn labeled_ranges(
    targets: &[(TargetId, Point2D)],
    receivers: &[Receiver],
    range: f64,
) -> Vec<LabeledDistance> {
    let ids: Vec<TargetId> = targets.iter().map(|t| t.0).collect();
    receivers
        .iter()
        .flat_map(|rx| {
            let ids = &ids;
            targets.iter().filter_map(move |&(_, p)| {
                let d = p.distance(rx.position);
                (d <= range).then(|| LabeledDistance {
                    receiver: rx.id,
                    distance: d,
                    candidates: ids.clone(),
                })
            })
        })
        .collect()
}

/// Candidates scattered around `at` for filter steps.
pub fn candidates_near(target: TargetId, at: Point2D, n: u32) -> Vec<CandidatePosition> {
    (0..n)
        .map(|i| {
            let a = f64::from(i) * 2.4;
            let r = 0.01 * f64::from(i + 1);
            CandidatePosition {
                target,
                position: Point2D::new(at.x + r * a.cos(), at.y + r * a.sin()),
                residue: r * r,
                consistent: 4,
                support: Vec::new(),
            }
        })
        .collect()
}
