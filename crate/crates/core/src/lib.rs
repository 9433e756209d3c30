//! Layered rateless codes over Gaussian channels: rate-loss bounds,
//! closed-form and optimized gain matrices, power allocation for
//! dithered repetition, and a Monte Carlo check of the decoder.

pub mod capacity;
pub mod cli;
pub mod closed_form;
pub mod error;
pub mod formats;
pub mod gain;
pub mod optimizer;
pub mod power_alloc;
pub mod simulator;
pub mod tables;

pub use capacity::{CodeSpec, ThresholdRule, ThresholdSchedule};
pub use error::{Error, Result};
pub use gain::{GainMatrix, PolarEntry};
pub use optimizer::{optimize_gain_matrix, shortfall_report, Optimized, OptimizerConfig, ShortfallReport};
pub use power_alloc::{allocate_powers, PowerAllocation};
pub use simulator::{simulate_dithered_repetition, SimConfig, SimReport};
