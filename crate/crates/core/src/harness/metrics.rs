//! Error distribution and scheduling efficiency.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::ids::TargetId;
use crate::scenario::TruthRow;
use crate::tracking::EstimateKind;

use super::io::{ErrorRow, EstimateRow, ScheduleRow};

/// Sorted errors with linearly interpolated quantiles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorCdf {
    sorted: Vec<f64>,
}

impl ErrorCdf {
    pub fn from_errors(mut errors: Vec<f64>) -> Self {
        errors.sort_by(f64::total_cmp);
        Self { sorted: errors }
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Empirical quantile, `q` in `[0, 1]`; NaN when empty.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.sorted[lo] + (self.sorted[hi] - self.sorted[lo]) * frac
    }

    /// Fraction of errors at or below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return f64::NAN;
        }
        self.sorted.partition_point(|&e| e <= x) as f64 / self.sorted.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// Per-estimate errors against truth of the same slot and target.
pub fn error_rows(estimates: &[EstimateRow], truth: &[TruthRow]) -> Result<Vec<ErrorRow>> {
    let index: HashMap<(u64, TargetId), Point2D> = truth
        .iter()
        .map(|t| ((t.slot, t.target), t.position))
        .collect();
    estimates
        .iter()
        .map(|e| {
            let at = index.get(&(e.slot, e.target)).ok_or_else(|| {
                Error::Alignment(format!(
                    "no truth for target {} at slot {}",
                    e.target, e.slot
                ))
            })?;
            Ok(ErrorRow {
                slot: e.slot,
                target: e.target,
                error: e.position().distance(*at),
                kind: e.kind,
            })
        })
        .collect()
}

pub fn compute_error_cdf(estimates: &[EstimateRow], truth: &[TruthRow]) -> Result<ErrorCdf> {
    Ok(ErrorCdf::from_errors(
        error_rows(estimates, truth)?
            .into_iter()
            .map(|r| r.error)
            .collect(),
    ))
}

/// Mean number of targets per slot.
pub fn compute_efficiency(schedule: &[ScheduleRow]) -> Result<f64> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty schedule log".into()));
    }
    let mut total = 0usize;
    for row in schedule {
        total += row.targets()?.len();
    }
    Ok(total as f64 / schedule.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub estimates: usize,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean_error: f64,
    pub max_error: f64,
    /// Mean targets per slot, bootstrap included.
    pub efficiency: f64,
    pub slots: usize,
    /// Fraction of estimates extrapolated rather than located.
    pub predicted_fraction: f64,
    /// Times a tracked target was declared lost.
    pub loss_events: usize,
    /// Loss events per scheduled target-slot.
    pub loss_rate: f64,
    pub separation_distance: f64,
}

pub fn summarize(
    errors: &[ErrorRow],
    schedule: &[ScheduleRow],
    loss_events: usize,
    separation_distance: f64,
) -> Result<MetricsReport> {
    let cdf = ErrorCdf::from_errors(errors.iter().map(|e| e.error).collect());
    let predicted = errors
        .iter()
        .filter(|e| e.kind == EstimateKind::Predicted)
        .count();
    let mut scheduled = 0usize;
    for row in schedule {
        scheduled += row.targets()?.len();
    }
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(MetricsReport {
        estimates: errors.len(),
        p50: cdf.quantile(0.5),
        p90: cdf.quantile(0.9),
        p99: cdf.quantile(0.99),
        mean_error: if cdf.is_empty() { f64::NAN } else { cdf.mean() },
        max_error: cdf.quantile(1.0),
        efficiency: compute_efficiency(schedule)?,
        slots: schedule.len(),
        predicted_fraction: frac(predicted, errors.len()),
        loss_events,
        loss_rate: frac(loss_events, scheduled),
        separation_distance,
    })
}
