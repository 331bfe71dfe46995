//! Tabular recurrent Q-learning laboratory for finite POMDPs.
//!
//! The crate pairs an online learner that runs over a fixed agent-state
//! machine with the exact quantities that describe its limit: the stationary
//! joint chain, the induced agent-state MDP and its fixed point, finite-horizon
//! history values, and certificates comparing the two through integral
//! probability metrics. A small episodic trainer with sequence replay,
//! n-step double-Q targets and tabular predictors completes the toolkit.

pub mod agent_state;
pub mod ais;
pub mod bounds;
pub mod chain;
pub mod error;
pub mod harness;
pub mod ipm;
mod lp;
pub mod pomdp;
pub mod rng;
pub mod rql;
pub mod solvers;

pub use agent_state::{AgentPolicy, AgentStateMachine, HistoryNode, HistoryTree};
pub use error::{Error, Result};
pub use pomdp::{Belief, Pomdp, Trajectory};
