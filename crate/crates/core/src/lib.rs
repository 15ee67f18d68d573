//! Trace-driven, time-sliced simulator of a multi-site computing grid.
//!
//! The simulator replays a batch-job trace against a topology of sites and
//! WAN links under three data-placement strategies (data preplaced at the
//! execution site, copy-and-cache on job start, pure remote streaming) and
//! reports total wall clock, per-job CPU efficiency, queue evolution, and
//! per-link network usage as plot-ready CSV time series.
//!
//! Pipeline: [`ingest`] parses the four CSV fixtures (sites, links, replica
//! catalog, job trace) and assembles a validated [`engine::SimulationState`];
//! [`engine`] advances it slice by slice consulting the [`scenarios`] policy
//! and the [`params`] tables; [`metrics`] collects samples and writes the
//! output files.

pub mod engine;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod params;
pub mod scenarios;

pub use engine::{RunConfig, SimulationState};
pub use error::{Error, Result};
pub use ingest::{assemble_state, FixtureSet};
pub use metrics::{summarize, write_outputs, MetricsLog, SummaryReport};
pub use model::{FileCatalog, Job, Link, Site, SiteId, Topology};
pub use params::{EfficiencyHistogram, ParamSet, PenaltyTable, SpeedTable, SweepConfig};
pub use scenarios::ScenarioKind;
