use std::collections::{BTreeMap, BTreeSet};

use super::model::{Iri, Node, RdfTriple};
use crate::error::{Error, Result};
use crate::ontology::{default_prefixes, SchemaDecl};

/// In-memory triple set with subject- and predicate-ordered indexes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphStore {
    spo: BTreeSet<RdfTriple>,
    /// (predicate, object, subject) view of the same triples.
    pos: BTreeSet<(Iri, Node, Iri)>,
    pub schema: Vec<SchemaDecl>,
    prefixes: BTreeMap<String, String>,
}

impl GraphStore {
    pub fn new() -> Self {
        GraphStore {
            prefixes: default_prefixes(),
            ..Default::default()
        }
    }

    pub fn with_schema(schema: Vec<SchemaDecl>) -> Self {
        GraphStore {
            schema,
            ..GraphStore::new()
        }
    }

    /// Returns whether the triple was new.
    pub fn insert(&mut self, t: RdfTriple) -> bool {
        if self.spo.contains(&t) {
            return false;
        }
        self.pos
            .insert((t.predicate.clone(), t.object.clone(), t.subject.clone()));
        self.spo.insert(t)
    }

    pub fn extend<I: IntoIterator<Item = RdfTriple>>(&mut self, triples: I) -> usize {
        triples.into_iter().filter(|t| self.insert(t.clone())).count()
    }

    pub fn remove(&mut self, t: &RdfTriple) -> bool {
        self.pos
            .remove(&(t.predicate.clone(), t.object.clone(), t.subject.clone()));
        self.spo.remove(t)
    }

    pub fn contains(&self, t: &RdfTriple) -> bool {
        self.spo.contains(t)
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    /// All triples in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &RdfTriple> {
        self.spo.iter()
    }

    pub fn with_subject<'a>(&'a self, s: &'a Iri) -> impl Iterator<Item = &'a RdfTriple> + 'a {
        self.spo
            .range(lower_bound(s)..)
            .take_while(move |t| &t.subject == s)
    }

    /// Subjects and objects of triples with predicate `p`.
    pub fn with_predicate<'a>(&'a self, p: &'a Iri) -> impl Iterator<Item = (&'a Iri, &'a Node)> + 'a {
        self.pos
            .range((p.clone(), Node::Iri(min_iri()), min_iri())..)
            .take_while(move |(pp, _, _)| pp == p)
            .map(|(_, o, s)| (s, o))
    }

    /// Subjects with `(s, p, o)`.
    pub fn subjects_with<'a>(&'a self, p: &'a Iri, o: &'a Node) -> impl Iterator<Item = &'a Iri> + 'a {
        self.pos
            .range((p.clone(), o.clone(), min_iri())..)
            .take_while(move |(pp, oo, _)| pp == p && oo == o)
            .map(|(_, _, s)| s)
    }

    /// Objects with `(s, p, o)`.
    pub fn objects_of<'a>(&'a self, s: &'a Iri, p: &'a Iri) -> impl Iterator<Item = &'a Node> + 'a {
        self.with_subject(s)
            .filter(move |t| &t.predicate == p)
            .map(|t| &t.object)
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    /// Binds `prefix` to `base`; rejects a second binding of the same prefix
    /// to a different base.
    pub fn add_prefix(&mut self, prefix: &str, base: &str) -> Result<()> {
        match self.prefixes.get(prefix) {
            Some(b) if b != base => Err(Error::Config(format!(
                "prefix {prefix}: already bound to {b}"
            ))),
            _ => {
                Iri::new(base)?;
                self.prefixes.insert(prefix.to_string(), base.to_string());
                Ok(())
            }
        }
    }
}

fn min_iri() -> Iri {
    Iri::min_sentinel()
}

fn lower_bound(s: &Iri) -> RdfTriple {
    RdfTriple {
        subject: s.clone(),
        predicate: min_iri(),
        object: Node::Iri(min_iri()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::model::Literal;

    fn iri(s: &str) -> Iri {
        Iri::new(format!("http://e.org/{s}")).unwrap()
    }

    #[test]
    fn set_semantics() {
        let mut g = GraphStore::new();
        let t = RdfTriple::new(iri("a"), iri("p"), iri("b"));
        assert!(!g.contains(&t));
        assert!(g.insert(t.clone()));
        assert!(!g.insert(t.clone()));
        assert_eq!(g.len(), 1);
        assert!(g.contains(&t));
        assert!(g.remove(&t));
        assert!(g.is_empty());
    }

    #[test]
    fn indexes() {
        let mut g = GraphStore::new();
        g.insert(RdfTriple::new(iri("a"), iri("p"), iri("b")));
        g.insert(RdfTriple::new(iri("a"), iri("q"), Literal::string("x")));
        g.insert(RdfTriple::new(iri("c"), iri("p"), iri("b")));
        g.insert(RdfTriple::new(iri("ab"), iri("p"), iri("b")));
        assert_eq!(g.with_subject(&iri("a")).count(), 2);
        let p = iri("p");
        assert_eq!(g.with_predicate(&p).count(), 3);
        let b = Node::Iri(iri("b"));
        let subs: Vec<_> = g.subjects_with(&p, &b).map(|s| s.local_name().to_string()).collect();
        assert_eq!(subs, ["a", "ab", "c"]);
        assert_eq!(g.objects_of(&iri("a"), &iri("q")).count(), 1);
    }

    #[test]
    fn prefixes_are_injective() {
        let mut g = GraphStore::new();
        g.add_prefix("ex", "http://e.org/").unwrap();
        g.add_prefix("ex", "http://e.org/").unwrap();
        assert!(g.add_prefix("ex", "http://other.org/").is_err());
        assert!(g.add_prefix("rdf", "http://other.org/").is_err());
    }
}
