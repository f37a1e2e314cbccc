//! Stable quasi-maximum-likelihood estimation for univariate SDEs driven by
//! locally stable pure-jump Lévy processes and observed at high frequency.
//!
//! The crate is `no_std` (with `alloc`); file formats, the experiment
//! harness and the command line live in the companion `sqmle` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod expr;
pub mod inference;
pub mod llt;
pub mod model;
pub mod noise;
pub mod optim;
pub mod quad;
pub mod sim;
pub mod special;
pub mod sqlik;
pub mod stable;

pub use error::{Error, Result};
pub use inference::StudentizedReport;
pub use model::{ModelSpec, Theta};
pub use noise::{NoiseSpec, RngStream};
pub use sim::{FinePath, ObservationSeries};
pub use sqlik::{FitResult, OptimizerConfig, OptimizerMode, QuasiLikelihood};
pub use stable::{InfoConstants, KernelConfig, StableKernel};
