//! Paddy disease diagnosis platform.

pub mod error;
pub mod gateway;
pub mod augment;
pub mod blobstore;
pub mod broker;
pub mod cli;
pub mod clock;
pub mod geometry;
pub mod inference;
pub mod messages;
pub mod metrics;
pub mod orchestrator;
pub mod raster;
pub mod taxonomy;
pub mod treatment;

pub use error::{Error, Result};
