//! Command-line and HTTP front end for `frostroute`.

pub mod commands;
pub mod config;
pub mod engine;
pub mod server;

pub use commands::{load_snapshot, run_cli, Cli};
pub use config::AppConfig;
pub use engine::{QueryError, RouteResponse, Snapshot};
