//! Joint beamforming and cache-aware backhaul optimisation for a cache-enabled
//! cloud radio access network.
//!
//! The pipeline is: [`scenario`] draws a network and its time slots,
//! [`relaxation`] solves the lifted semidefinite relaxation with an iterative
//! linearisation of the coverage constraint (each subproblem handed to the
//! [`conic`] interior-point solver), [`rounding`] turns the lifted solution
//! into beamformers, and [`costmodel`] scores them exactly. [`harness`] sweeps
//! the power/backhaul trade-off and [`oracle`] checks the solver against
//! problems with known answers.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod conic;
pub mod costmodel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod relaxation;
pub mod rng;
pub mod rounding;
pub mod scenario;

pub use conic::{ConicProblem, ConicSolution, SolveStatus, SolverSettings};
pub use costmodel::{network_cost, Beamformers, CostBreakdown, QosConfig};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, SweepRecord};
pub use relaxation::{mm_optimize, RelaxationConfig, RelaxedSolution};
pub use rounding::{round_solution, RoundingConfig, RoundingReport};
pub use scenario::{CachePlacement, CachingMode, PopularityModel, Scenario, TimeSlot};
