//! Distributed path tracing where each rank holds only part of the scene.
//!
//! A scene is partitioned across ranks ([`partition`]), each rank's share is
//! described to every other rank by overlapping ownership boxes ([`proxy`]), and
//! a wavefront path tracer ([`engine`]) forwards rays between ranks until each
//! has met every piece of geometry that could occlude it. Ranks talk through a
//! [`transport::RankGroup`], either in one process or over TCP.

pub mod accel;
pub mod engine;
pub mod error;
pub mod math;
pub mod metrics;
pub mod partition;
pub mod proxy;
pub mod reference;
pub mod scene;
pub mod transport;

pub use error::{Error, Result};
