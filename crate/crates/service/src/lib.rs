//! Service layer for the counseling dialogue engine: session event logs,
//! the HTTP API and the operator CLI.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod events;
pub mod output;
pub mod server;
pub mod sessions;

pub use config::ServiceConfig;
pub use events::{replay_session, EventKind, ReplayError, SessionEvent};
