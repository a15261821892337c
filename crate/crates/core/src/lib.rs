//! Platoon sizing, spectrum sharing and split/merge dynamics for V2V
//! platooning under partial base-station coverage.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod dynamics;
pub mod montecarlo;
pub mod qos;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod spectrum;

pub use report::{Event, EventType, MetricsReport, MetricsSample, Summary};
pub use scenario::{CoverageCaps, Scenario, ScenarioError};
pub use sim::{run, SimError, Simulation};
