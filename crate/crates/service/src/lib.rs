//! Two-stage annotation backend. Stage 1 pools per-hand contact responses
//! into a consensus; stage 2 offers rule-filtered Therblig choices between two
//! resolved contacts and re-validates every submission before it is stored.

pub mod api;
pub mod consensus;
pub mod error;
pub mod ingest;
pub mod model;
pub mod store;

pub use api::{router, serve};
pub use error::{Result, ServiceError};
pub use store::{Store, StoreConfig};
