//! Branching process with detection and contact tracing: exact analytics and
//! cross-validated stochastic simulation.
//!
//! Individuals reproduce by a fixed offspring law. Each infection edge is
//! independently traceable with probability `alpha`; each individual is
//! tested `b` generations after birth and detected with probability `p`. A
//! detection removes the individual's whole traceable cluster. The crate
//! computes, for any parameter point:
//!
//! * whether the traced process dies out or survives with positive
//!   probability ([`analytics::classify_extinction`]),
//! * its exponential growth rate on survival ([`analytics::malthusian_theta`]),
//! * the critical trace probability `e_b(p)` ([`analytics::critical_alpha`]),
//!
//! and validates these against two independent exact simulators: a literal
//! genealogy simulation ([`sim_direct`]) and a cluster-level one
//! ([`sim_cluster`]), plus brute-force oracles and Monte Carlo estimators
//! ([`montecarlo`]). The full cross-check battery lives in [`validate`].

pub mod analytics;
pub mod montecarlo;
pub mod offspring;
pub mod params;
pub mod rng;
pub mod sim_cluster;
pub mod sim_direct;
pub mod stats;
pub mod trajectory;
pub mod validate;

pub use analytics::{ExtinctionVerdict, Verdict};
pub use offspring::OffspringDistribution;
pub use params::CtpParams;
pub use trajectory::Trajectory;
