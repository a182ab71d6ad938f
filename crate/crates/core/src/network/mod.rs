//! Simulated network: topologies, scenarios, the round driver and traces.

pub mod adversary;
pub mod engine;
pub mod scenario;
pub mod topology;
pub mod trace;

pub use adversary::{eavesdrop_collect, tamper, AdversaryConfig, TamperSpec};
pub use engine::{run, run_with, RunError};
pub use scenario::{KeyRotation, KeySpec, Scenario, ScenarioError};
pub use topology::{Edge, TopologyMode, TopologySchedule, TopologySpec};
pub use trace::{Engine, RunSummary, RunTrace};
