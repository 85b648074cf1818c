//! Beam-domain NOMA for analog mmWave arrays: array model, ideal and
//! constant-modulus beam design, SIC rates, power/gain allocation, user
//! pairing and multi-chain hybrid operation.

pub mod allocation;
pub mod array;
pub mod beam_model;
pub mod design;
pub mod error;
pub mod hybrid;
pub mod pairing;
pub mod rate;
pub mod report;

pub use array::{ArrayGeometry, Awv, ChannelState, Direction, FadingMode, UserSpec};
pub use error::{Error, Result};
