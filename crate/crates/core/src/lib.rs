//! Desk-scale simulator of Balance Responsible Party passive balancing
//! under imbalance pricing mechanisms: EV-fleet virtual batteries,
//! two-stage stochastic day-ahead bidding, rolling-horizon real-time
//! deviation optimization, per-ISP settlement, connection-point congestion
//! detection and reporting.

pub mod config;
pub mod error;
pub mod fleet;
pub mod grid;
pub mod lp;
pub mod market;
pub mod metrics;
pub mod milp;
pub mod optimizer;
pub mod orchestrator;
pub mod scenario;
pub mod settlement;

pub use error::{Result, SimError};
