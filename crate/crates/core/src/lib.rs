//! Parameter identification for dynamical systems from trajectories: learn a
//! velocity field over state and parameters, then recover parameters of new
//! trajectories by descending through the frozen model.

pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod infer;
pub mod integrate;
pub mod net;
pub mod oracle;
pub mod io;
pub mod par;
pub mod systems;
pub mod train;

pub use error::{Error, FormatError, Result};
