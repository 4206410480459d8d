//! Chorus-mode localization of multiple narrowband ultrasound targets.
//!
//! Targets transmit in the same time slot; each receiver reports anonymous
//! distances. The crate models what a receiver can detect, how much coverage
//! survives concurrent transmission, how anonymous distances are turned back
//! into per-target tracks, and how targets are grouped into slots.

pub mod detection;
pub mod error;
pub mod feasibility;
pub mod geometry;
pub mod harness;
pub mod ids;
pub mod locating;
pub mod scenario;
pub mod scheduler;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{AcousticParams, Point2D};
pub use ids::{ReceiverId, TargetId};
