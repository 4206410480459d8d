//! Threshold-comparator model of a receiver.
//!
//! A detected wavefront drives the comparator high for the aftershock
//! duration `L_max`; any wavefront arriving while it is high is absorbed.
//! Absorbed wavefronts do not extend the high state, only detected ones
//! restart it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{AcousticParams, Point2D};
use crate::ids::TargetId;

/// A wavefront reaching a receiver. The source is ground truth and never
/// leaves the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub time: f64,
    pub source: TargetId,
}

/// An anonymous time of arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedToa {
    pub time: f64,
}

fn by_time(arrivals: &[ArrivalEvent]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..arrivals.len()).collect();
    order.sort_by(|&i, &j| {
        arrivals[i]
            .time
            .partial_cmp(&arrivals[j].time)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Indices into `arrivals` of the wavefronts the comparator reports, in time
/// order.
pub fn detect_arrivals(arrivals: &[ArrivalEvent], params: &AcousticParams) -> Vec<usize> {
    let l_max = params.max_aftershock();
    let mut detected = Vec::new();
    let mut high_since: Option<f64> = None;
    for idx in by_time(arrivals) {
        let t = arrivals[idx].time;
        match high_since {
            Some(start) if t - start <= l_max => {}
            _ => {
                detected.push(idx);
                high_since = Some(t);
            }
        }
    }
    detected
}

/// Run the comparator over one slot's arrivals.
pub fn simulate_comparator(arrivals: &[ArrivalEvent], params: &AcousticParams) -> Vec<DetectedToa> {
    detect_arrivals(arrivals, params)
        .into_iter()
        .map(|i| DetectedToa {
            time: arrivals[i].time,
        })
        .collect()
}

/// Two-target detectability at receiver `x`: both in range and their path
/// lengths differ by more than the aftershock distance.
pub fn pairwise_detectable(a: Point2D, b: Point2D, x: Point2D, params: &AcousticParams) -> bool {
    let d_ax = a.distance(x);
    let d_bx = b.distance(x);
    let r = params.audible_range();
    (d_ax - d_bx).abs() > params.aftershock_distance() && d_ax <= r && d_bx <= r
}

/// Per input target, whether its wavefront survives at receiver `x` when all
/// `targets` transmit together. Out-of-range targets report `false`.
pub fn multi_detectable(targets: &[Point2D], x: Point2D, params: &AcousticParams) -> Vec<bool> {
    let r = params.audible_range();
    let omega = params.aftershock_distance();
    let mut in_range: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.distance(x)))
        .filter(|&(_, d)| d <= r)
        .collect();
    in_range.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));

    let mut out = vec![false; targets.len()];
    let mut last_detected: Option<f64> = None;
    for (i, d) in in_range {
        let keep = match last_detected {
            None => true,
            Some(prev) => d - prev > omega,
        };
        if keep {
            out[i] = true;
            last_detected = Some(d);
        }
    }
    out
}
