//! Slot-based schedule construction for entanglement distribution in
//! quantum networks.

pub mod error;
pub mod experiment;
pub mod fidelity;
pub mod fixtures;
pub mod model;
pub mod protoselect;
pub mod pts;
pub mod rcpsp;
pub mod schedule;
pub mod validate;

pub use error::{Error, Result};
