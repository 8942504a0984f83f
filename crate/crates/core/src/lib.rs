//! Transportation-mode detection and mobility analytics.

pub mod analytics;
pub mod client;
pub mod config;
pub mod estimator;
pub mod model;
pub mod pipeline;
pub mod privacy;
pub mod server;
pub mod simulator;
pub mod store;
pub mod transit;
pub mod trips;
