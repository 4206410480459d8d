//! Flat CSV rows and artifact writing.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::ids::{ReceiverId, TargetId};
use crate::scenario::{Receiver, TruthRow};
use crate::scheduler::SlotKind;
use crate::tracking::EstimateKind;

use super::engine::RunArtifacts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthCsvRow {
    pub slot: u64,
    pub target: TargetId,
    pub x: f64,
    pub y: f64,
}

impl From<&TruthRow> for TruthCsvRow {
    fn from(t: &TruthRow) -> Self {
        Self {
            slot: t.slot,
            target: t.target,
            x: t.position.x,
            y: t.position.y,
        }
    }
}

impl From<TruthCsvRow> for TruthRow {
    fn from(t: TruthCsvRow) -> Self {
        TruthRow {
            slot: t.slot,
            target: t.target,
            position: Point2D::new(t.x, t.y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub slot: u64,
    pub target: TargetId,
    pub x: f64,
    pub y: f64,
    pub kind: EstimateKind,
}

impl EstimateRow {
    pub fn position(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub slot: u64,
    pub target: TargetId,
    pub error: f64,
    pub kind: EstimateKind,
}

/// One slot of the schedule log; `target_ids` is `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub round: u64,
    pub slot_index: u64,
    pub kind: SlotKind,
    pub target_ids: String,
}

impl ScheduleRow {
    pub fn new(round: u64, slot_index: u64, kind: SlotKind, targets: &[TargetId]) -> Self {
        let target_ids = targets
            .iter()
            .map(|t| t.0.to_string())
            .collect::<Vec<_>>()
            .join(";");
        Self {
            round,
            slot_index,
            kind,
            target_ids,
        }
    }

    pub fn targets(&self) -> Result<Vec<TargetId>> {
        if self.target_ids.is_empty() {
            return Ok(Vec::new());
        }
        self.target_ids
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map(TargetId)
                    .map_err(|e| Error::InvalidInput(format!("bad target id {s:?}: {e}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub slot: u64,
    pub receiver: ReceiverId,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverRow {
    pub receiver: ReceiverId,
    pub x: f64,
    pub y: f64,
}

impl From<&Receiver> for ReceiverRow {
    fn from(r: &Receiver) -> Self {
        Self {
            receiver: r.id,
            x: r.position.x,
            y: r.position.y,
        }
    }
}

impl From<ReceiverRow> for Receiver {
    fn from(r: ReceiverRow) -> Self {
        Receiver {
            id: r.receiver,
            position: Point2D::new(r.x, r.y),
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Write every artifact of a run into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("truth.csv"),
        artifacts.truth.iter().map(TruthCsvRow::from),
    )?;
    write_csv(&dir.join("estimates.csv"), &artifacts.estimates)?;
    write_csv(&dir.join("errors.csv"), &artifacts.errors)?;
    write_csv(&dir.join("schedule.csv"), &artifacts.schedule)?;
    write_csv(&dir.join("distances.csv"), &artifacts.distances)?;
    write_csv(
        &dir.join("receivers.csv"),
        artifacts.receivers.iter().map(ReceiverRow::from),
    )?;
    let mut summary = serde_json::to_string_pretty(&artifacts.report)?;
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    Ok(read_csv::<TruthCsvRow>(path)?
        .into_iter()
        .map(TruthRow::from)
        .collect())
}

pub fn read_schedule(path: &Path) -> Result<Vec<ScheduleRow>> {
    read_csv(path)
}

pub fn read_distances(path: &Path) -> Result<Vec<DistanceRow>> {
    read_csv(path)
}

pub fn read_receivers(path: &Path) -> Result<Vec<Receiver>> {
    Ok(read_csv::<ReceiverRow>(path)?
        .into_iter()
        .map(Receiver::from)
        .collect())
}
