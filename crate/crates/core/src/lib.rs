//! Desk-scale model-averaging SGD.
//!
//! This crate holds the pure algorithmic part of the project: a small dense
//! tensor type, a declarative layer graph that instantiates into a trainable
//! network, dataset generation/sharding/batching, the three training schemes
//! (serial SGD, naive minibatch splitting and τ-round model averaging) driven
//! by a simulated clock, and the closed-form speedup analysis built on top of
//! their traces.
//!
//! Everything here is `no_std` + `alloc`. File formats, configuration and the
//! command line live in the `parasgd` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod rng;
pub mod schemes;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::NDArray;
