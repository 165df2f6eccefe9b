//! Decentralized shortest-path discovery by memoryless tokens.
//!
//! Tokens injected at source nodes move along an arc only when the token
//! count at their node exceeds the count at the arc's head by more than the
//! arc's cost. Under persistent injection the node counts settle into the
//! shortest distances to the sinks, and later tokens follow shortest paths.
//! A secondary per-arc cost with a budget turns this into constrained
//! shortest-path discovery.
//!
//! [`oracle`] computes the same answers exactly and independently, so the
//! token dynamics can be checked against it.

pub mod choice;
pub mod constrained;
pub mod error;
pub mod generators;
pub mod modify;
pub mod network;
pub mod oracle;
pub mod policy;
pub mod simulator;
pub mod validate;

pub use choice::{ChoiceModel, Chooser, STREAM_ALGORITHM};
pub use constrained::{
    constrained_inject, constrained_inject_enhanced, constrained_settle, expand, expand_full, is_acyclic,
    is_admissible_constrained, lift_state, project_state, BucketedState, ConstrainedNetwork, ExpandedNetwork,
};
pub use error::{Error, Result};
pub use modify::{apply_modification, apply_modification_constrained, Modification, Scenario, ScheduledModification};
pub use network::{
    incidence_matrix, is_admissible, scale_rational_costs, total_tokens, ArcSpec, Network, NetworkState, NodeId,
    Path, Walk,
};
pub use policy::{
    inject, inject_with, is_global_rest, permitted_moves, run_token, run_token_enhanced, settle, Policy, StateDelta,
    StepResult, Terminal, TokenOutcome,
};
pub use simulator::{run, run_dynamic, summarize, MetricsLog, Mode, Schedule, SimConfig, Stop, Summary};
pub use validate::{validate_assumptions, ValidationReport};
