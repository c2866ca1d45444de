//! Desk-scale environments with exact return-distribution oracles, replay,
//! exploration and the training loop.

mod agent;
mod assess;
mod env;
mod explore;
mod oracle;
mod replay;

pub use agent::{Agent, AgentConfig, StepRecord, Trainer, UpdateStats};
pub use assess::{assess, averaged_estimate, evaluate, Assessment, AveragedEstimate, EvalSummary};
pub use env::{EnvKind, EnvSpec, Environment, Outcome, StepResult};
pub use explore::{argmax, epsilon_greedy, LinearSchedule};
pub use oracle::{
    brute_force_return_distribution, brute_force_with_limit, greedy_policy, optimal_q, policy_evaluation,
    wasserstein1, ReturnDistribution, STATE_SPACE_LIMIT,
};
pub use replay::{ReplayBuffer, Transition};
