//! Payload types flowing through the topology.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::HierarchyError;
use crate::model::{Id, Timestamp};

/// A sensor reading (or a group result re-entering the topology as one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sensor: Id,
    pub value: f64,
    #[serde(rename = "ts")]
    pub timestamp: Timestamp,
}

impl Measurement {
    pub fn new(sensor: impl Into<Id>, value: f64, timestamp: Timestamp) -> Self {
        debug_assert!(value.is_finite(), "measurement values must be finite");
        Measurement {
            sensor: sensor.into(),
            value,
            timestamp,
        }
    }
}

/// Aggregate for one group: the sum over its member entries and how many
/// entries contribute. `count == 0` implies `sum == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationResult {
    pub group: Id,
    pub sum: f64,
    pub count: u64,
    #[serde(rename = "ts")]
    pub timestamp: Timestamp,
}

/// Aggregate function selection for a topology instance.
///
/// Only aggregates with an efficient subtract inverse fit the incremental
/// update contract; sum is the one shipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKind {
    Sum,
}

impl AggregateKind {
    pub fn from_name(name: &str) -> Result<Self, TopologyError> {
        match name {
            "sum" => Ok(AggregateKind::Sum),
            other => Err(TopologyError::UnsupportedAggregate(other.to_owned())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("unsupported aggregate function: {0}")]
    UnsupportedAggregate(String),
    #[error(
        "feedback bound exceeded: {processed} internal records for one input \
         (bound {bound}); the hierarchy most likely contains a cycle"
    )]
    FeedbackBoundExceeded { processed: usize, bound: usize },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}
