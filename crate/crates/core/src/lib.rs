//! Intention-aware policy graphs for driving behaviour.
//!
//! Pipeline: continuous scenes are discretised into predicate states
//! ([`discretizer`]), counted into a [`graph::PolicyGraph`], scored against
//! declarative [`desires`] by the [`intention`] solver, summarised by
//! [`metrics`] and queried through [`qa`]. [`synth`] produces seeded
//! synthetic scenes with known ground truth.

// Negated float comparisons double as NaN rejection in validators.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::should_implement_trait,
    clippy::type_complexity
)]

pub mod desires;
pub mod discretizer;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod intention;
pub mod map;
pub mod metrics;
pub mod qa;
pub mod scene;
pub mod state;
pub mod synth;
pub mod trajectory;

pub use desires::{DesireKind, DesireSpec, KindFilter, Registry};
pub use graph::PolicyGraph;
pub use intention::{IntentionTable, SolverConfig};
pub use state::{ActionLabel, DiscreteState, Predicate};
pub use trajectory::Trajectory;
