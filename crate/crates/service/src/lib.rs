//! Session service and batch CLI on top of the `botdyn` lab.
//!
//! The service keeps a store of named models and a set of live conversations, and
//! runs the heavier analyses (reachability, certificates, synthesis, games) as jobs
//! on a bounded worker pool. The JSON schema is described in `API.md`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod http;
pub mod jobs;
pub mod session;
pub mod store;

pub use error::{ApiError, ApiResult};

/// Version stamped on every JSON body.
pub const SCHEMA_VERSION: u32 = 1;
