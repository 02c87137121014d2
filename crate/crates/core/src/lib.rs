//! Causal bandits on linear structural equation models.
//!
//! The crate provides, end to end:
//!
//! - ground-truth environments: DAG skeletons with observational and
//!   interventional weight matrices, bounded noise, exact post-intervention
//!   means via path compounding, and a brute-force best-arm oracle
//!   ([`sem`], [`graph`], [`noise`]);
//! - structure learning from round-robin single-node interventions with
//!   penalized parent screening ([`structure`], [`lasso`]);
//! - phased-elimination intervention design with recursive confidence
//!   widths ([`design`]);
//! - instance generators including a minimax-hard two-instance family
//!   ([`gallery`]);
//! - an experiment harness with seeded replications, regret aggregation and
//!   CSV artifacts ([`harness`], [`trace`], [`io`]);
//! - independent reference implementations for cross-checking ([`oracle`]).

// Validation guards are written as `!(x > 0.0)` on purpose: the negation is
// what rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod design;
pub mod env;
pub mod error;
pub mod gallery;
pub mod graph;
pub mod harness;
pub mod io;
pub mod lasso;
pub mod noise;
pub mod oracle;
pub mod sem;
pub mod structure;
pub mod trace;

pub use arm::Arm;
pub use error::{Error, Result};
pub use graph::DagSkeleton;
pub use noise::NoiseSpec;
pub use sem::SemInstance;
pub use trace::RegretTrace;
