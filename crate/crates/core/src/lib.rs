//! Temporal knockout benchmark engine: network generation, activation
//! skeletons, SIR/SIS dynamics, knockout scoring, centrality and analysis.

pub mod analysis;
pub mod centrality;
pub mod epidemic;
pub mod graphgen;
pub mod knockout;
pub mod skeleton;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use epidemic::{simulate, DiseaseSpec, KnockoutSpec, Model, SimError, State, TemporalWeb};
pub use graphgen::{BaseNetwork, Graph, GraphError, NetworkKind};
pub use knockout::{tko_field, AgentTko, NodeMarginal, TkoField};
pub use skeleton::{build_skeleton, Skeleton};
