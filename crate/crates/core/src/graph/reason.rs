//! Schema validation and forward-chaining inference.
//!
//! Rules are written one per line in an s-expression syntax:
//!
//! ```text
//! @prefix kg: <http://example.org/kg#>
//! (rule HighRiskPatient ((kg:Patient ?p) (kg:hasCA19_9 ?p ?a) (greaterThan ?a 1000)) (kg:HighRiskPatient ?p))
//! ```
//!
//! A body atom is a class atom `(Class ?x)`, a property atom
//! `(prop ?x ?y)` whose object may also be an IRI, a quoted string or a number,
//! or a builtin `(greaterThan ?v 10)`, `(lessThan ?v 10)`, `(equal ?v 10)`.
//! The head must be a single class atom.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{Datatype, Iri, Literal, Node, RdfTriple};
use super::store::GraphStore;
use crate::error::{Error, Result};
use crate::ontology::{check_acyclic, default_prefixes, expand_term, SchemaDecl};

/// Reflexive-transitive subclass relation over every class the schema mentions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubclassClosure {
    supers: BTreeMap<Iri, BTreeSet<Iri>>,
}

impl SubclassClosure {
    pub fn is_subclass(&self, sub: &Iri, sup: &Iri) -> bool {
        sub == sup || self.supers.get(sub).is_some_and(|s| s.contains(sup))
    }

    /// Strict superclasses of `c`.
    pub fn superclasses<'a>(&'a self, c: &'a Iri) -> impl Iterator<Item = &'a Iri> + 'a {
        self.supers.get(c).into_iter().flatten().filter(move |s| *s != c)
    }

    /// `c` and everything below it.
    pub fn subclasses_of(&self, c: &Iri) -> BTreeSet<Iri> {
        let mut out: BTreeSet<Iri> = self
            .supers
            .iter()
            .filter(|(_, sups)| sups.contains(c))
            .map(|(k, _)| k.clone())
            .collect();
        out.insert(c.clone());
        out
    }

    /// Non-reflexive `(sub, sup)` pairs.
    pub fn pairs(&self) -> Vec<(Iri, Iri)> {
        let mut out = Vec::new();
        for (sub, sups) in &self.supers {
            for sup in sups {
                if sub != sup {
                    out.push((sub.clone(), sup.clone()));
                }
            }
        }
        out
    }
}

/// Closure of the schema's `SubClassOf` and `EquivalentClass` axioms.
pub fn subclass_closure(schema: &[SchemaDecl]) -> Result<SubclassClosure> {
    check_acyclic(schema)?;
    let mut edges: BTreeMap<&Iri, BTreeSet<&Iri>> = BTreeMap::new();
    for d in schema {
        match d {
            SchemaDecl::SubClassOf { sub, sup } => {
                edges.entry(sub).or_default().insert(sup);
            }
            SchemaDecl::EquivalentClass { a, b } => {
                edges.entry(a).or_default().insert(b);
                edges.entry(b).or_default().insert(a);
            }
            _ => {}
        }
    }
    let mut supers = BTreeMap::new();
    for &start in edges.keys() {
        let mut seen: BTreeSet<Iri> = BTreeSet::new();
        let mut queue: VecDeque<&Iri> = edges[start].iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            if seen.insert(c.clone()) {
                if let Some(next) = edges.get(c) {
                    queue.extend(next.iter().copied());
                }
            }
        }
        seen.remove(start);
        supers.insert(start.clone(), seen);
    }
    Ok(SubclassClosure { supers })
}

fn types_of<'a>(store: &'a GraphStore, x: &'a Iri, rdf_type: &'a Iri) -> Vec<&'a Iri> {
    store.objects_of(x, rdf_type).filter_map(Node::as_iri).collect()
}

fn has_type(store: &GraphStore, closure: &SubclassClosure, x: &Iri, class: &Iri) -> bool {
    let rdf_type = Iri::rdf_type();
    types_of(store, x, &rdf_type)
        .into_iter()
        .any(|t| closure.is_subclass(t, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Domain,
    Range,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub role: Role,
    pub expected: Iri,
    /// Types actually asserted; empty when the node is untyped. Literal
    /// objects report their datatype.
    pub found: Vec<String>,
}

/// A triple whose subject or object does not fit the declared domain or range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Inconsistency {
    pub triple: RdfTriple,
    pub violations: Vec<Violation>,
}

impl fmt::Display for Inconsistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.triple.subject, self.triple.predicate)?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            let found = if v.found.is_empty() {
                "untyped".to_string()
            } else {
                v.found.join(",")
            };
            write!(f, "{:?} expected {} found {}", v.role, v.expected, found)?;
        }
        Ok(())
    }
}

/// Checks every triple whose predicate has a declared domain or range. In
/// strict mode an untyped endpoint is a violation; otherwise it is skipped.
pub fn validate_domain_range(store: &GraphStore, strict: bool) -> Result<Vec<Inconsistency>> {
    let closure = subclass_closure(&store.schema)?;
    let rdf_type = Iri::rdf_type();
    let mut decls: BTreeMap<&Iri, Vec<(&Iri, &Iri)>> = BTreeMap::new();
    for d in &store.schema {
        if let SchemaDecl::DomainRange { property, domain, range } = d {
            decls.entry(property).or_default().push((domain, range));
        }
    }
    let mut out = Vec::new();
    for (prop, ranges) in &decls {
        for (s, o) in store.with_predicate(prop) {
            let mut violations = Vec::new();
            let s_types = types_of(store, s, &rdf_type);
            for (domain, range) in ranges {
                if !(s_types.is_empty() && !strict) && !s_types.iter().any(|t| closure.is_subclass(t, domain)) {
                    violations.push(Violation {
                        role: Role::Domain,
                        expected: (*domain).clone(),
                        found: s_types.iter().map(|t| t.to_string()).collect(),
                    });
                }
                match o {
                    Node::Iri(oi) => {
                        let o_types = types_of(store, oi, &rdf_type);
                        if !(o_types.is_empty() && !strict) && !o_types.iter().any(|t| closure.is_subclass(t, range)) {
                            violations.push(Violation {
                                role: Role::Range,
                                expected: (*range).clone(),
                                found: o_types.iter().map(|t| t.to_string()).collect(),
                            });
                        }
                    }
                    Node::Literal(l) => {
                        if l.datatype.iri() != range.as_str() {
                            violations.push(Violation {
                                role: Role::Range,
                                expected: (*range).clone(),
                                found: vec![l.datatype.iri().to_string()],
                            });
                        }
                    }
                }
            }
            if !violations.is_empty() {
                out.push(Inconsistency {
                    triple: RdfTriple::new(s.clone(), (*prop).clone(), o.clone()),
                    violations,
                });
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Applies `class ⊓ ∃property.filler ⊑ sup` axioms until nothing new follows.
/// Returns the inferred triples in the order they were added.
pub fn apply_restrictions(store: &mut GraphStore, axioms: &[SchemaDecl], closure: &SubclassClosure) -> Vec<RdfTriple> {
    let rdf_type = Iri::rdf_type();
    let mut inferred = Vec::new();
    loop {
        let mut new = BTreeSet::new();
        for ax in axioms {
            let SchemaDecl::Restriction { class, property, filler, sup } = ax else {
                continue;
            };
            let sup_node = Node::Iri(sup.clone());
            for c in closure.subclasses_of(class) {
                let c_node = Node::Iri(c.clone());
                for x in store.subjects_with(&rdf_type, &c_node) {
                    if store.contains(&RdfTriple::new(x.clone(), rdf_type.clone(), sup_node.clone())) {
                        continue;
                    }
                    let fires = store
                        .objects_of(x, property)
                        .filter_map(Node::as_iri)
                        .any(|y| has_type(store, closure, y, filler));
                    if fires {
                        new.insert(RdfTriple::new(x.clone(), rdf_type.clone(), sup_node.clone()));
                    }
                }
            }
        }
        if new.is_empty() {
            return inferred;
        }
        for t in new {
            if store.insert(t.clone()) {
                inferred.push(t);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Builtin {
    GreaterThan,
    LessThan,
    Equal,
}

impl Builtin {
    fn parse(name: &str) -> Option<Self> {
        match name.strip_prefix("swrlb:").unwrap_or(name) {
            "greaterThan" => Some(Builtin::GreaterThan),
            "lessThan" => Some(Builtin::LessThan),
            "equal" => Some(Builtin::Equal),
            _ => None,
        }
    }

    fn holds(&self, a: f64, b: f64) -> bool {
        match self {
            Builtin::GreaterThan => a > b,
            Builtin::LessThan => a < b,
            Builtin::Equal => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RuleTerm {
    Var(String),
    Const(Node),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Class { class: Iri, var: String },
    Property { property: Iri, subject: String, object: RuleTerm },
    Builtin { op: Builtin, var: String, constant: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwrlRule {
    pub name: String,
    pub body: Vec<Atom>,
    /// Always an [`Atom::Class`].
    pub head: Atom,
}

impl SwrlRule {
    /// Checks the head shape and that head variables occur in a body atom.
    pub fn new(name: impl Into<String>, body: Vec<Atom>, head: Atom) -> Result<Self> {
        let name = name.into();
        if body.is_empty() {
            return Err(Error::Config(format!("rule {name}: empty body")));
        }
        let Atom::Class { var, .. } = &head else {
            return Err(Error::Config(format!("rule {name}: head must be a class atom")));
        };
        let bound: BTreeSet<&str> = body
            .iter()
            .flat_map(|a| match a {
                Atom::Class { var, .. } => vec![var.as_str()],
                Atom::Property { subject, object, .. } => match object {
                    RuleTerm::Var(v) => vec![subject.as_str(), v.as_str()],
                    RuleTerm::Const(_) => vec![subject.as_str()],
                },
                Atom::Builtin { .. } => vec![],
            })
            .collect();
        if !bound.contains(var.as_str()) {
            return Err(Error::Config(format!("rule {name}: head variable ?{var} not bound in body")));
        }
        for a in &body {
            if let Atom::Builtin { var, .. } = a {
                if !bound.contains(var.as_str()) {
                    return Err(Error::Config(format!("rule {name}: builtin variable ?{var} not bound")));
                }
            }
        }
        Ok(SwrlRule { name, body, head })
    }
}

/// Splits an s-expression line into nested lists of atoms.
#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn read_sexp(line: &str) -> std::result::Result<Sexp, String> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().ok_or("unbalanced ')'")?;
                stack.last_mut().ok_or("unbalanced ')'")?.push(Sexp::List(done));
            }
            '"' => {
                let mut s = String::from('"');
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => {
                            if let Some(n) = chars.next() {
                                s.push(n);
                            }
                        }
                        Some(c) => s.push(c),
                        None => return Err("unterminated string".into()),
                    }
                }
                stack.last_mut().ok_or("unbalanced")?.push(Sexp::Atom(s));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                stack.last_mut().ok_or("unbalanced")?.push(Sexp::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced '('".into());
    }
    let mut top = stack.pop().unwrap_or_default();
    if top.len() != 1 {
        return Err("expected exactly one rule per line".into());
    }
    Ok(top.remove(0))
}

fn parse_atom(s: &Sexp, prefixes: &BTreeMap<String, String>) -> std::result::Result<Atom, String> {
    let Sexp::List(items) = s else {
        return Err("atom must be a list".into());
    };
    let words: Vec<&str> = items
        .iter()
        .map(|i| match i {
            Sexp::Atom(a) => Ok(a.as_str()),
            Sexp::List(_) => Err("nested list inside atom".to_string()),
        })
        .collect::<std::result::Result<_, _>>()?;
    let var = |w: &str| w.strip_prefix('?').map(str::to_string).ok_or_else(|| format!("expected variable, found {w:?}"));
    match words.as_slice() {
        [name, v, c] if Builtin::parse(name).is_some() => {
            let constant: f64 = c.parse().map_err(|_| format!("builtin constant {c:?} is not numeric"))?;
            Ok(Atom::Builtin {
                op: Builtin::parse(name).expect("checked"),
                var: var(v)?,
                constant,
            })
        }
        [class, v] => Ok(Atom::Class {
            class: expand_term(class, prefixes)?,
            var: var(v)?,
        }),
        [prop, s, o] => {
            let object = if let Some(v) = o.strip_prefix('?') {
                RuleTerm::Var(v.to_string())
            } else if let Some(lit) = o.strip_prefix('"') {
                RuleTerm::Const(Node::Literal(Literal::string(lit)))
            } else if super::model::is_decimal(o) {
                RuleTerm::Const(Node::Literal(Literal::new(*o, Datatype::Decimal).map_err(|e| e.to_string())?))
            } else {
                RuleTerm::Const(Node::Iri(expand_term(o, prefixes)?))
            };
            Ok(Atom::Property {
                property: expand_term(prop, prefixes)?,
                subject: var(s)?,
                object,
            })
        }
        _ => Err(format!("cannot read atom ({})", words.join(" "))),
    }
}

/// Parses a rule file; see the module docs for the syntax.
pub fn parse_rules(text: &str) -> Result<Vec<SwrlRule>> {
    let mut prefixes = default_prefixes();
    let mut rules = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let err = |message: String| Error::Parse {
            what: "rules",
            line: n + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix("@prefix") {
            let words: Vec<&str> = rest.trim_end_matches('.').split_whitespace().collect();
            let (Some(name), Some(iri)) = (words.first(), words.get(1)) else {
                return Err(err("prefix needs a name and an IRI".into()));
            };
            let name = name.strip_suffix(':').ok_or_else(|| err("prefix name must end with ':'".into()))?;
            let iri = iri
                .strip_prefix('<')
                .and_then(|s| s.strip_suffix('>'))
                .ok_or_else(|| err("prefix IRI must be in angle brackets".into()))?;
            prefixes.insert(name.to_string(), iri.to_string());
            continue;
        }
        let sexp = read_sexp(line).map_err(err)?;
        let Sexp::List(parts) = sexp else {
            return Err(err("expected (rule name (body...) (head))".into()));
        };
        let [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(body), head] = parts.as_slice() else {
            return Err(err("expected (rule name (body...) (head))".into()));
        };
        if kw != "rule" {
            return Err(err(format!("expected 'rule', found {kw:?}")));
        }
        let body = body
            .iter()
            .map(|a| parse_atom(a, &prefixes))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(err)?;
        let head = parse_atom(head, &prefixes).map_err(err)?;
        rules.push(SwrlRule::new(name.clone(), body, head).map_err(|e| err(e.to_string()))?);
    }
    Ok(rules)
}

type Bindings = BTreeMap<String, Node>;

fn numeric(node: &Node) -> Option<f64> {
    node.as_literal().and_then(Literal::as_f64)
}

fn solve(store: &GraphStore, closure: &SubclassClosure, atoms: &[&Atom], b: &mut Bindings, out: &mut Vec<Bindings>) {
    let Some((first, rest)) = atoms.split_first() else {
        out.push(b.clone());
        return;
    };
    let rdf_type = Iri::rdf_type();
    match first {
        Atom::Builtin { op, var, constant } => {
            // builtins are ordered after the atoms that bind their variable
            if b.get(var).and_then(numeric).is_some_and(|v| op.holds(v, *constant)) {
                solve(store, closure, rest, b, out);
            }
        }
        Atom::Class { class, var } => match b.get(var).cloned() {
            Some(Node::Iri(x)) => {
                if has_type(store, closure, &x, class) {
                    solve(store, closure, rest, b, out);
                }
            }
            Some(Node::Literal(_)) => {}
            None => {
                let mut xs: BTreeSet<Iri> = BTreeSet::new();
                for c in closure.subclasses_of(class) {
                    let c = Node::Iri(c);
                    xs.extend(store.subjects_with(&rdf_type, &c).cloned());
                }
                for x in xs {
                    b.insert(var.clone(), Node::Iri(x));
                    solve(store, closure, rest, b, out);
                }
                b.remove(var);
            }
        },
        Atom::Property { property, subject, object } => {
            let candidates: Vec<(Iri, Node)> = match b.get(subject) {
                Some(Node::Iri(s)) => store
                    .objects_of(s, property)
                    .map(|o| (s.clone(), o.clone()))
                    .collect(),
                Some(Node::Literal(_)) => Vec::new(),
                None => store
                    .with_predicate(property)
                    .map(|(s, o)| (s.clone(), o.clone()))
                    .collect(),
            };
            for (s, o) in candidates {
                let s_was_bound = b.contains_key(subject);
                let mut o_bound_here = None;
                let ok = match object {
                    RuleTerm::Const(c) => *c == o,
                    RuleTerm::Var(v) => match b.get(v) {
                        Some(existing) => *existing == o,
                        None => {
                            o_bound_here = Some(v.clone());
                            true
                        }
                    },
                };
                if !ok {
                    continue;
                }
                if !s_was_bound {
                    b.insert(subject.clone(), Node::Iri(s));
                }
                if let Some(v) = &o_bound_here {
                    b.insert(v.clone(), o);
                }
                // the same variable in subject and object position
                let consistent = match (object, o_bound_here.is_some()) {
                    (RuleTerm::Var(v), true) if v == subject => b.get(subject).is_some(),
                    _ => true,
                };
                if consistent {
                    solve(store, closure, rest, b, out);
                }
                if let Some(v) = &o_bound_here {
                    b.remove(v);
                }
                if !s_was_bound {
                    b.remove(subject);
                }
            }
        }
    }
}

/// Body atoms reordered so each builtin follows the atoms binding its variable.
fn plan(body: &[Atom]) -> Vec<&Atom> {
    let mut out: Vec<&Atom> = body.iter().filter(|a| !matches!(a, Atom::Builtin { .. })).collect();
    out.extend(body.iter().filter(|a| matches!(a, Atom::Builtin { .. })));
    out
}

/// Naive forward chaining of `rules` to a fixpoint. Returns newly inferred triples.
pub fn apply_swrl(store: &mut GraphStore, rules: &[SwrlRule], closure: &SubclassClosure) -> Vec<RdfTriple> {
    let rdf_type = Iri::rdf_type();
    let mut inferred = Vec::new();
    loop {
        let mut new = BTreeSet::new();
        for rule in rules {
            let Atom::Class { class, var } = &rule.head else {
                continue;
            };
            let mut sols = Vec::new();
            solve(store, closure, &plan(&rule.body), &mut Bindings::new(), &mut sols);
            for s in sols {
                if let Some(Node::Iri(x)) = s.get(var) {
                    let t = RdfTriple::new(x.clone(), rdf_type.clone(), class.clone());
                    if !store.contains(&t) {
                        new.insert(t);
                    }
                }
            }
        }
        if new.is_empty() {
            return inferred;
        }
        for t in new {
            if store.insert(t.clone()) {
                inferred.push(t);
            }
        }
    }
}

/// Restrictions from the store's schema and `rules`, interleaved until neither adds anything.
pub fn reason(store: &mut GraphStore, rules: &[SwrlRule]) -> Result<Vec<RdfTriple>> {
    let closure = subclass_closure(&store.schema)?;
    let axioms: Vec<SchemaDecl> = store
        .schema
        .iter()
        .filter(|d| matches!(d, SchemaDecl::Restriction { .. }))
        .cloned()
        .collect();
    let mut all = Vec::new();
    loop {
        let a = apply_restrictions(store, &axioms, &closure);
        let b = apply_swrl(store, rules, &closure);
        let done = a.is_empty() && b.is_empty();
        all.extend(a);
        all.extend(b);
        if done {
            return Ok(all);
        }
    }
}
