//! Copy-efficient fidelity estimation for multi-qubit entangled states.
//!
//! The crate covers the witness decomposition of the GHZ-type target state,
//! the optimal split of a copy budget across measurement settings, a Born-rule
//! simulator, the adaptive and Hoeffding-robust allocation procedures, and a
//! PhaseLift-style tomographic reconstruction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod allocator;
pub mod cli;
pub mod error;
pub mod hoeffding;
pub mod phaselift;
pub mod quantum;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod witness;

pub use error::{Error, Result};
pub use rng::RngSeed;
