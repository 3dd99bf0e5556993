//! Minimum reservoir rule curves under inflow uncertainty.
//!
//! The crate builds and solves three families of linear programs over
//! reservoir mass balance:
//!
//! * a deterministic model for one inflow scenario ([`reservoir`]),
//! * a stochastic model whose rule curve is the upper envelope of the
//!   per-scenario optima ([`stochastic`]),
//! * a robust model that optimises against per-step confidence-interval
//!   lower bounds of the historical inflows ([`robust`]).
//!
//! [`mpc`] wraps either uncertain model in a receding-horizon loop so that
//! every step of the resulting year-long curve carries the full guarantee
//! horizon. [`analysis`] holds the post-processing used to interpret the
//! curves.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod hydrology;
pub mod lp;
pub mod mpc;
pub mod reservoir;
pub mod robust;
pub mod stochastic;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use hydrology::{HydroYear, StepLength, TimeGrid};
pub use mpc::{MpcConfig, MpcModel, RuleCurve};
pub use reservoir::{DivertedRiverSpec, ReservoirSpec, Scenario, StorageTrajectory};
pub use robust::ConfidenceSpec;
pub use stochastic::{EnvelopeSolution, GenKind, ScenarioGenMethod};
