//! Secure cooperative relaying in dense Poisson networks.
//!
//! Legitimate nodes and eavesdroppers are dropped on the unit square by two
//! independent Poisson point processes. A randomly chosen source sends to a
//! randomly chosen destination with the help of the other legitimate nodes,
//! which decode-and-forward the message and beamform so that the cooperative
//! signal vanishes at every eavesdropper (zero forcing). Only the source's
//! fresh-information broadcast leaks, and it is protected by wiretap coding.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: point-process sampling, relaying / eavesdropper-free
//!   squares, cluster chains, feasibility checks, Poisson tail bounds.
//! - [`channel`]: path-loss gains and channel matrices.
//! - [`beamforming`]: null spaces, zero-forcing vectors, power allocation.
//! - [`rates`]: closed-form secure rates for every scheme and the secrecy cost.
//! - [`scaling`]: eavesdropper schedules, full trials, Monte-Carlo sweeps.
//! - [`cli`]: configuration parsing and CSV emitters behind the `secsim` binary.

pub mod beamforming;
pub mod channel;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod rates;
pub mod scaling;

pub use error::{Error, Result};
