//! Magnitude-aided CSI feedback for FDD massive MIMO.

pub mod csi;
pub mod decomposition;
pub mod dualnet;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
