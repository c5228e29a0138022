//! Workspace persistence, review HTTP API and CLI around `revkit-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod review;
pub mod workspace;

pub use config::Config;
pub use engine::{Engine, Providers};
pub use error::{Result, ServiceError};
pub use workspace::Workspace;
