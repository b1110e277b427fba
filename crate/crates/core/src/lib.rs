//! Deterministic, seedable simulator for steering a swarm of point-mass UAVs
//! from a source region to a destination under stochastic wind.
//!
//! Each agent learns online: a value-function model driven by the
//! Hamilton-Jacobi-Bellman residual and a population-density model driven by
//! the Fokker-Planck-Kolmogorov residual, coupled through a mean-field
//! interaction term. Model weights can be federated over a simulated Rician
//! fading link, which replaces per-step state sharing and cuts the
//! communication payload.
//!
//! The crate exposes the building blocks (dynamics, cost, basis, learners,
//! channel, federation) plus an orchestrator that runs the full control loops
//! and emits CSV/JSON reports.

pub mod basis;
pub mod channel;
pub mod config;
pub mod cost;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod federation;
pub mod fpk;
pub mod hjb;
pub mod orchestrator;
pub mod report;
pub mod rng;

pub use config::ScenarioConfig;
pub use error::SimError;
pub use report::SimReport;
