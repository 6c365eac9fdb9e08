//! Command line and HTTP front ends for the scatgate pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod service;
pub mod workspace;

pub use config::{LoopSettings, ServiceConfig};
pub use error::{GatewayError, Result};
pub use service::{router, AppState};
pub use workspace::Workspace;
