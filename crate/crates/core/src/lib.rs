//! Time-slotted simulation of cloud networks hosting service function
//! chains, with reconfiguration-aware max-weight control and an LP oracle
//! for the capacity region and minimum average cost.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod capacity;
pub mod engine;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod scenario;

pub use engine::{run, run_observed, FlowMode, PolicyDecision, RunConfig, RunOutput, SimState, Simulator};
pub use model::{build_commodities, validate_network, CloudNetwork, CommoditySet};
pub use policies::{Policy, PolicyConfig, PolicyRegistry};
