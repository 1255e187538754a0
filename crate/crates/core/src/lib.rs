//! Design space exploration for compute-in-memory (CIM) accelerators.
//!
//! The crate is organised bottom-up:
//!
//! - [`design_space`]: discrete parameter spaces, validity rules, enumeration and binning.
//! - [`surrogate`]: an analytic PPA model standing in for a circuit-level simulator,
//!   plus the batch runtime cost model.
//! - [`optimizer`]: batched random search, simulated annealing, a genetic algorithm and
//!   a Parzen-estimator search over a (possibly pruned) active space.
//! - [`pruning`]: transfer of knowledge from a pre-simulated base workload: power-law
//!   constraint projection, Top-K bin pruning and stochastic de-pruning.
//! - [`request`]: rule-based interpretation of natural-language simulation requests into
//!   validated, adjustable parameter sets and execution plans.
//! - [`orchestrator`]: sessions, confirmation gating, job execution and persistence.
//! - [`experiment`]: paired-seed comparison harness.

pub mod catalog;
pub mod design_space;
pub mod error;
pub mod experiment;
pub mod optimizer;
pub mod orchestrator;
pub mod pruning;
pub mod request;
pub mod surrogate;

pub use error::{Error, Result};
