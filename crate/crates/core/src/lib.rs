//! Random-walk network formation models.
//!
//! Graphs grow one edge per step: with probability `α` a new vertex attaches
//! to a selected vertex, otherwise a random walk of random length from the
//! selected vertex decides the other endpoint. The crate covers forward
//! simulation, the spectral walk kernels, maximum likelihood on observed
//! histories, SMC bridges over unobserved insertion orders, particle MCMC,
//! and goodness-of-fit statistics.

pub mod bridge;
pub mod error;
pub mod generative;
pub mod graph;
pub mod law;
pub mod mle;
pub mod netstats;
pub mod pmcmc;
pub mod rng;
pub mod spectral;
pub mod walk;

pub use error::{Error, Result};
pub use graph::{Graph, GraphMode, History, LatentPath};
pub use law::WalkLengthLaw;
