//! Tabular action-robust reinforcement learning at desk scale.
//!
//! The crate is organized around a fixed-horizon tabular MDP in which the
//! executed action follows the agent's policy with probability `1 - rho` and
//! an adversarial policy with probability `rho`:
//!
//! - [`mdp`]: MDP and policy types, perturbed execution, exact evaluation of
//!   agent/adversary policy pairs.
//! - [`planner`]: exact robust dynamic programming (the ground-truth oracle)
//!   plus brute-force enumeration cross-checks.
//! - [`arrlc`]: model-based learner with optimistic/pessimistic value pairs
//!   and per-episode policy certificates.
//! - [`ucbh`]: model-free Q-learning variant with Hoeffding bonuses and
//!   monotone value updates.
//! - [`envs`]: benchmark environment constructors (cliff walking, chain,
//!   random instances).
//! - [`eval`]: perturbed-execution rollouts, regret curves, and certificate
//!   audits against the oracle.
//! - [`io`]: JSON file formats for MDPs, policies, and solutions.

pub mod arrlc;
pub mod envs;
pub mod eval;
pub mod io;
pub mod mdp;
pub mod planner;
pub mod rng;
pub mod ucbh;

pub use mdp::{DeterministicPolicy, ExecutionModel, RewardNoise, RewardScale, TabularMdp};
pub use planner::{RobustPolicyValue, RobustSolution};
