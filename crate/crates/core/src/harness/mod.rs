//! Scenario files, staged runs, verification suites and the run cache.

pub mod cache;
pub mod config;
pub mod pipeline;
pub mod run;
pub mod verify;

pub use config::Scenario;
pub use pipeline::Pipeline;
pub use run::{export, run_scenario, ExportFormat, RunManifest, RunStatus};
pub use verify::{verify, Suite, Verdict};
