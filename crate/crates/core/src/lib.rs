//! Discrete-event simulator for a proxy-assisted peer-to-peer video-on-demand
//! cluster, with replica replication/placement policies and a birth–death
//! reliability model for replica lifetime.

pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod metrics;
pub mod placement;
pub mod reliability;
pub mod replication;
pub mod selection;
pub mod sim;
pub mod workload;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use metrics::MetricsReport;
