//! RDF encoding, storage, validation, inference and querying.

mod encode;
mod model;
mod ntriples;
mod reason;
mod sparql;
mod store;

pub use encode::{attribute_iri, encode_eav, entity_iri, value_literal, EncodeOptions};
pub use model::{Datatype, Iri, Literal, Node, RdfTriple, FHIR, KG, OWL, RDF, RDFS, RDF_TYPE, SNOMED, XSD};
pub use ntriples::{ntriples_line, parse_ntriples, serialize_ntriples, serialize_turtle};
pub use reason::{
    apply_restrictions, apply_swrl, parse_rules, reason, subclass_closure, validate_domain_range, Atom, Builtin,
    Inconsistency, Role, RuleTerm, SubclassClosure, SwrlRule, Violation,
};
pub use sparql::{
    eval_sparql, parse_sparql, CmpOp, Comparison, Operand, PatternTerm, QueryResult, SparqlQuery, TriplePattern,
};
pub use store::GraphStore;
