//! Maintained-state artifact substrate.
//!
//! Stores typed, versioned, dependency-aware artifacts in an append-only
//! event log, resolves which artifacts are currently authoritative per
//! (role, scope), plans regeneration when artifacts are superseded, and
//! scores external systems against gold-annotated perturbation tasks.

pub mod artifact;
pub mod benchmark;
pub mod canon;
pub mod lineage;
pub mod logfile;
pub mod resolver;
pub mod store;

pub use artifact::{
    ArtifactDraft, ArtifactId, ArtifactRecord, AuthorityMode, DepEdge, EdgeType, Lineage, Payload,
    Role, Scope, Status,
};
pub use resolver::Resolution;
pub use store::{Store, SubstrateEvent};
