//! Slot-driven network simulation.

pub mod engine;
pub mod interference;
pub mod metrics;
pub mod zones;

pub use engine::{run_baseline, Simulation, SlotRecord, TimeseriesRow};
pub use interference::InterferenceEstimate;
pub use metrics::Metrics;
pub use zones::{build_zone_map, ZoneMap};
