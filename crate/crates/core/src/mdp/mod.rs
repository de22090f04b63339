//! The charging MDP: configuration, discretized instances, risk-averse backward
//! induction, basestock thresholds and the structural verification suite.

mod config;
mod instance;
mod solve;
mod structure;

pub use config::{MarketCompensation, MdpConfig};
pub use instance::MdpInstance;
pub use solve::{solve, MdpSolution, ThresholdTable};
pub use structure::{
    check_threshold_order, check_value_order, verify_structure, CheckOutcome, Location,
    StructureReport, BASESTOCK, CONVEXITY, PRICE_MONOTONE, THRESHOLD_PRICE,
};
