//! Codec evaluation harness for LED-wall virtual production.
//!
//! The crate reproduces an in-camera codec evaluation end to end at desk
//! scale:
//!
//! - [`media`]: frames, clips, Y4M I/O, format conversion, synthetic clips.
//! - [`marker`]: corner fiducials carrying clip id and frame index.
//! - [`channel`]: simulated LED wall + camera capture chain.
//! - [`codec`]: encoder backends, the built-in toy codec, ladders, timing.
//! - [`alignment`]: captured-to-source frame mapping and genlock events.
//! - [`metrics`]: PSNR, external metric runners, noise floor.
//! - [`analysis`]: rate-quality curves, threshold bitrates, savings tables, reports.
//! - [`experiment`]: manifests, the result store and the pipeline driver.

pub mod alignment;
pub mod analysis;
pub mod channel;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod marker;
pub mod media;
pub mod metrics;
pub mod rng;
mod shell;

pub use error::{Error, Result};

/// Recorded into every store record.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
