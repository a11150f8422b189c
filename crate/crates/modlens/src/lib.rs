//! File formats, configuration, the moderation service and the `modlens`
//! command built on `modlens-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod report;
pub mod scorer;
pub mod service;
pub mod store;

pub use error::{Error, Result};
