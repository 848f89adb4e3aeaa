//! Near-zero multiplication skipping for fixed-point matrix-vector
//! products.
//!
//! The crate is layered bottom-up:
//!
//! - [`fixedpoint`]: Q-format scalars, exact products and wide accumulators.
//! - [`nzacore`]: leading-zero counting, the product LZC bound and the
//!   keep/skip filter evaluated by the NZAU each cycle.
//! - [`refmodel`]: exact golden matvec, the P1/P2/P3 split and sparsity.
//! - [`sim`]: cycle-level model of the 16-lane accelerator.
//! - [`metrics`]: event counters, energy model and duty cycle.
//! - [`netrunner`]: toy networks, im2col lowering and threshold sweeps.
//! - [`selftest`]: exhaustive 8-bit property checks.

pub mod error;
pub mod fixedpoint;
pub mod fixtures;
pub mod metrics;
pub mod netrunner;
pub mod nzacore;
pub mod refmodel;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
pub use fixedpoint::{FixedFormat, FixedScalar, WideAccumulator};
pub use nzacore::{KeepMask, NzThreshold, SkipMode, LANES};
pub use refmodel::{FixedVector, InputVector, SparsityStats, WeightMatrix};
pub use sim::{AcceleratorConfig, CycleStats, SimRun};
