//! Configuration, file formats, the Monte Carlo harness and the local-limit
//! runner on top of [`sqmle_core`].

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod llt;

pub use error::{Error, Result};
pub use sqmle_core as core;
