//! Signature features of piecewise-linear paths, used to predict and to
//! steer the output of unknown input-affine systems from data.
//!
//! The pipeline is: sample inputs on a [`paths::TimeGrid`], augment them with
//! time, compute running signatures ([`signature`]), regress outputs on them
//! ([`features`]), and invert the learned map for open-loop tracking
//! ([`control`]). [`sim`] produces ground-truth data and [`experiment`] drives
//! the Monte Carlo studies.

pub mod config;
pub mod control;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod features;
mod linalg;
pub mod paths;
pub mod signature;
pub mod sim;

pub use error::{Error, Result};
