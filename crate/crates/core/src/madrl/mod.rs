//! Multi-agent deterministic policy-gradient learners for bidirectional
//! power allocation.
//!
//! Uplink and downlink users act as agents with continuous scalar actions
//! (their power coefficients). Training is centralised: critics see the
//! joint observation and all agents' actions; execution is distributed:
//! each actor maps its local observation to an action. MATD3 adds twin
//! critics with min-target bootstrapping, target-policy smoothing, and
//! delayed actor updates on top of the MADDPG baseline.

pub mod agent;
pub mod baselines;
pub mod env;
pub mod nn;
pub mod replay;
pub mod train;

pub use agent::{Agent, AgentEnsemble, Algorithm};
pub use baselines::{baseline_allocation, UplinkScheme};
pub use env::PowerEnv;
pub use replay::{ReplayBuffer, Transition};
pub use train::{train, Checkpoint, TrainConfig, TrainLog};
