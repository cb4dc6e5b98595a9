//! Simulator for auction-based task allocation among heterogeneous robots
//! mining a lunar-like arena: scouts search, excavators dig, haulers carry
//! minerals to a processing plant. Tasks are allocated by a first-price,
//! one-round auction protocol over a broadcast bus, under one of three
//! bidding policies.

pub mod agents;
pub mod auction;
pub mod bus;
pub mod cli;
pub mod engine;
pub mod log;
pub mod metrics;
pub mod pathing;
pub mod policy;
pub mod verify;
pub mod world;

pub use engine::{run_to_completion, RunOutput, RunStatus, SimRun};
pub use policy::PolicyKind;
pub use world::{Point, ScenarioConfig, TimingConfig};
