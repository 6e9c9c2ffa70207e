//! Numerics for McKean–Vlasov SDEs with distribution-dependent noise:
//! particle law flows, couplings by change of measure, Bismut estimators of
//! intrinsic derivatives, entropy-cost and ergodicity experiments.

pub mod bismut;
pub mod cli;
pub mod closed_form;
pub mod coupling;
pub mod ergodicity;
pub mod error;
pub mod harnack;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod presets;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
