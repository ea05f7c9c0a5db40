//! Distributed stage-wise conservative linear contextual bandits with hidden
//! contexts.
//!
//! Agents observe only a distribution over contexts each round, share a
//! parameter through a lifted feature space, and must keep every round's
//! expected reward above a fraction of a baseline policy's reward. The crate
//! provides the simulation engine: linear algebra, task lifting, environment,
//! the agent learner, the sync server, the experiment runner and dataset
//! ingestion.

pub mod agent;
pub mod coordinator;
pub mod data;
pub mod environment;
pub mod experiment;
pub mod numerics;
pub mod seeds;
pub mod tasks;

pub use agent::{AgentState, Decision, DecisionKind, Hyperparams, Mode};
pub use coordinator::{CommLedger, Server, SyncDown, SyncUp};
pub use environment::{BaselineInfo, ContextDistribution, Environment};
pub use experiment::config::RunConfig;
pub use numerics::SymPsdMatrix;
pub use tasks::TaskSpec;
