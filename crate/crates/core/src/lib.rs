//! Trace-driven simulator for choosing one vehicle per geohash zone as a local
//! community broker.
//!
//! The pipeline replays GPS traces ([`trace`]), maps positions to 7-character
//! geohash zones ([`geozone`]), turns zone stays into arrivals with service
//! times ([`events`]), and runs threshold-based online selection rules and
//! their switching ensemble over every zone ([`selection`], [`simulate`]).
//! [`metrics`] aggregates the outcomes and [`experiment`] ties it together.

pub mod config;
pub mod events;
pub mod experiment;
pub mod geozone;
pub mod metrics;
pub mod seed;
pub mod selection;
pub mod simulate;
pub mod synthetic;
pub mod trace;

pub use config::{BudgetSetting, ConfigError, ExperimentConfig, TraceSource};
pub use experiment::{run_experiment, ExperimentError, RunReport};
