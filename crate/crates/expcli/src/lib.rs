//! Scenario-driven Monte Carlo experiments for diffusion LMS over GMRFs.
//!
//! A [`Scenario`] describes the network, the noise field, the regressors, the
//! parameter law and the algorithms to compare. [`Instance::new`] resolves it
//! into matrices and step sizes, [`run_scenario`] simulates every run on
//! shared random streams, and [`analyze`] evaluates the steady-state theory.

pub mod analyze;
mod error;
pub mod experiment;
pub mod instance;
pub mod output;
pub mod presets;
pub mod runner;
pub mod scenario;
pub mod sweep;

pub use analyze::{analyze, AlgorithmTheory};
pub use error::{ExpError, Result};
pub use experiment::{run_preset, Format};
pub use instance::{Instance, Plan};
pub use presets::{preset, Preset, PRESET_NAMES};
pub use runner::{run_scenario, simulate_run, steady_state_msd, RunOptions, RunSet};
pub use scenario::Scenario;
pub use sweep::{apply_axis, gain_table, sweep, SweepAxis};
