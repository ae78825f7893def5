//! Optimistic least-squares value iteration for episodic MDPs with general
//! function approximation, using uniformly subsampled datasets to build
//! width-function exploration bonuses.

pub mod function_space;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod agent;
pub mod analysis;
pub mod bonus;
pub mod harness;
pub mod subsampler;
pub mod suites;
