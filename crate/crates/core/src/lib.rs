//! Multifidelity Monte Carlo reinforcement learning on tabular MDPs.
//!
//! The crate pairs an expensive high-fidelity environment with a cheap,
//! generative low-fidelity one and uses the low-fidelity returns as a
//! control variate when estimating state-action values. It contains:
//!
//! * [`mdp`]: tabular episodic MDPs, rollouts, returns and an exact
//!   policy-evaluation oracle.
//! * [`envs`]: random synthetic MDPs with SNR-controlled low-fidelity
//!   counterparts, and a neural-architecture-search environment.
//! * [`estimators`]: sample-mean and control-variate Q estimators.
//! * [`agents`]: first-visit MC control and its multifidelity variant.
//! * [`theory`]: concentration / policy-improvement bound calculators and
//!   their empirical verifiers.
//! * [`experiment`]: seeded sweeps, CSV/JSON export and reporting.
//!
//! Data-parallel loops (Monte Carlo trials, sweep runs) go through
//! [`parallel`], which uses rayon when the `parallel` feature is enabled and
//! a plain sequential loop otherwise. Both paths produce identical results.

pub mod agents;
pub mod envs;
pub mod estimators;
pub mod experiment;
pub mod mdp;
pub mod parallel;
pub mod policy;
pub mod rng;
pub mod theory;

pub use agents::{AgentConfig, LowAggregation, TrainingHistory};
pub use estimators::{MfmcEstimate, PairedReturns};
pub use mdp::{Environment, MdpSpec, QTable, StateMap, Trajectory};
pub use policy::{EpsilonSoftPolicy, GreedyPolicy, Policy};
