//! Learning-curve traces for early stopping: fit a power law to growing
//! prefixes of an accuracy curve, follow the asymptotes, and decide when the
//! curve has converged enough to predict accuracy further out.

pub mod anchoring;
pub mod controller;
pub mod error;
pub mod fitting;
pub mod io;
pub mod levels;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod report;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
