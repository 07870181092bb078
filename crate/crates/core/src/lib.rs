//! Gaussian-process and two-layer deep-GP emulators with closed-form gradient
//! posteriors, and a gradient-entropy sequential design loop.

pub mod emulator;
pub mod design;
pub mod dgp;
pub mod error;
pub mod gp;
pub mod gradnorm;
pub mod lgp;
pub mod mathcore;
pub mod scaling;
pub mod testbeds;

pub use emulator::Emulator;
pub use error::{Error, Result};
