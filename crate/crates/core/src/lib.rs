//! Physically based synthetic images of planar fiducial markers and a
//! closed-loop 6-DoF pose accuracy benchmark.

pub mod bench;
pub mod camera;
pub mod cli;
pub mod error;
pub mod optics;
pub mod render;
pub mod sampling;

pub use error::{Error, Result};
