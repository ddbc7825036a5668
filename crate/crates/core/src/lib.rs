//! Deterministic multi-agent simulator of distributed digital-preservation
//! decisions: institutions hold collections of files in formats of varying
//! obsolescence risk, detect risky formats, ask trusted peers for advice and
//! migrate collections to safer formats.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod protocol;
pub mod registry;
pub mod risk;
pub mod trust;
pub mod world;

pub use engine::{Event, SimConfig, Simulation};
pub use metrics::{MetricSample, MetricsLog};
