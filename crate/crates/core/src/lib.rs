//! Knowledge-graph construction from clinical narratives.
//!
//! The crate turns free-text reports into EAV triples with agent-backed
//! extraction, grounds them against the source text, maps terms onto standard
//! vocabularies, derives scored relations and encodes everything as RDF.

pub mod agents;
pub mod config;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod grounding;
pub mod metrics;
pub mod ontology;
pub mod pipeline;
pub mod relations;
pub mod text;

pub use error::{Error, Result};
