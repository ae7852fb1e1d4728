//! Approximation algorithms for consensus splitting and necklace splitting.
//!
//! Measures are piecewise-constant densities on `[0, 1]` with exact rational
//! breakpoints. Offline algorithms query the point oracles of
//! [`ConsensusInstance`]; online algorithms read an [`OnlineStream`] left to
//! right and never revise a decision. Lower-bound adversaries in
//! [`adversary`] play against any [`game::ConsensusBalancer`] or
//! [`game::NecklaceBalancer`].

pub mod adversary;
pub mod allocation;
pub mod error;
pub mod game;
pub mod generate;
pub mod harness;
pub mod measure;
pub mod offline;
pub mod offline_necklace;
pub mod online;
pub mod online_necklace;
pub mod potential;
pub mod rational;
pub mod stream;
pub mod type1;

pub use allocation::{
    absolute_discrepancy, build_allocation, build_necklace_allocation, validate_proper_consensus,
    validate_proper_necklace, Allocation, ConsensusReport, DiscrepancyReport, NecklaceAllocation,
    NecklaceReport,
};
pub use error::{Result, SplitError};
pub use measure::{
    necklace_to_consensus, BeadMap, ConsensusInstance, CountingOracle, InstanceFile,
    NecklaceInstance, StepMeasure,
};
pub use rational::Rational;
