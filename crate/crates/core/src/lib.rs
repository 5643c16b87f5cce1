//! Simulation and calibration models for a self-aligning
//! electro-permanent-magnet connector.

pub mod compliance;
pub mod coupling;
pub mod docking;
pub mod error;
pub mod fit;
pub mod fluidics;
pub mod force;
pub mod magnetics;

pub use error::{EpmError, Result};
