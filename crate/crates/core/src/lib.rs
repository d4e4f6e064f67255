//! Sum-rate optimization for full-duplex NOMA cells with joint user pairing,
//! uplink decoding order, beamforming and uplink power control.

pub mod algorithms;
pub mod association;
pub mod channel;
pub mod conic;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod rates;
pub mod rng;
pub mod subproblem;
pub mod surrogate;

pub use error::{Error, Result};
