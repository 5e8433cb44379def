//! Sequential empirical processes for dependent data.
//!
//! The crate simulates dependent data models, computes the sequential
//! empirical process `U_n(f, t)`, the two-sided field `R_n(f, t)` and the
//! change-point statistic `T_n`, samples the Kiefer-process limit for
//! critical values, and checks the spectral, mixing, moment and bracketing
//! conditions behind the limit theorem on finite instances.

pub mod bracketing;
pub mod empirical;
pub mod error;
pub mod exec;
pub mod kiefer;
pub mod mixing;
pub mod processes;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
