pub mod config;
pub mod metrics;
pub mod sim;
pub mod transport;
