use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const FHIR: &str = "http://hl7.org/fhir/";
pub const KG: &str = "http://example.org/kg#";
pub const SNOMED: &str = "http://snomed.info/id/";

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// An absolute IRI: a scheme followed by a non-empty remainder with no
/// whitespace or characters N-Triples forbids inside angle brackets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Iri(String);

impl Iri {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if is_valid_iri(&s) {
            Ok(Iri(s))
        } else {
            Err(Error::InvalidIri(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Sorts before every valid IRI; only used as a range bound.
    pub(super) fn min_sentinel() -> Self {
        Iri(String::new())
    }

    pub fn rdf_type() -> Self {
        Iri(RDF_TYPE.to_string())
    }

    /// The part after the last `#` or `/`.
    pub fn local_name(&self) -> &str {
        let cut = self.0.rfind(['#', '/']).map(|i| i + 1).unwrap_or(0);
        &self.0[cut..]
    }
}

fn is_valid_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut sc = scheme.chars();
    sc.next().is_some_and(|c| c.is_ascii_alphabetic())
        && sc.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && !rest.is_empty()
        && !rest
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

impl TryFrom<String> for Iri {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Iri::new(s)
    }
}

impl From<Iri> for String {
    fn from(i: Iri) -> String {
        i.0
    }
}

impl FromStr for Iri {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Iri::new(s)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    String,
    Decimal,
    Integer,
    Boolean,
}

impl Datatype {
    pub fn iri(&self) -> &'static str {
        match self {
            Datatype::String => "http://www.w3.org/2001/XMLSchema#string",
            Datatype::Decimal => "http://www.w3.org/2001/XMLSchema#decimal",
            Datatype::Integer => "http://www.w3.org/2001/XMLSchema#integer",
            Datatype::Boolean => "http://www.w3.org/2001/XMLSchema#boolean",
        }
    }

    pub fn from_iri(iri: &str) -> Option<Self> {
        [Datatype::String, Datatype::Decimal, Datatype::Integer, Datatype::Boolean]
            .into_iter()
            .find(|d| d.iri() == iri)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub lexical: String,
    pub datatype: Datatype,
}

impl Literal {
    pub fn new(lexical: impl Into<String>, datatype: Datatype) -> Result<Self> {
        let lexical = lexical.into();
        let ok = match datatype {
            Datatype::String => true,
            Datatype::Decimal => is_decimal(&lexical),
            Datatype::Integer => is_integer(&lexical),
            Datatype::Boolean => matches!(lexical.as_str(), "true" | "false" | "1" | "0"),
        };
        if ok {
            Ok(Literal { lexical, datatype })
        } else {
            Err(Error::Encoding(format!("{lexical:?} is not a valid {datatype:?} lexical form")))
        }
    }

    pub fn string(s: impl Into<String>) -> Self {
        Literal {
            lexical: s.into(),
            datatype: Datatype::String,
        }
    }

    pub fn boolean(b: bool) -> Self {
        Literal {
            lexical: b.to_string(),
            datatype: Datatype::Boolean,
        }
    }

    /// Numeric value for decimal and integer literals.
    pub fn as_f64(&self) -> Option<f64> {
        match self.datatype {
            Datatype::Decimal | Datatype::Integer => self.lexical.parse().ok(),
            _ => None,
        }
    }
}

fn is_integer(s: &str) -> bool {
    let d = s.strip_prefix(['+', '-']).unwrap_or(s);
    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn is_decimal(s: &str) -> bool {
    let d = s.strip_prefix(['+', '-']).unwrap_or(s);
    match d.split_once('.') {
        None => !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()),
        Some((a, b)) => {
            !(a.is_empty() && b.is_empty())
                && a.bytes().all(|c| c.is_ascii_digit())
                && b.bytes().all(|c| c.is_ascii_digit())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Iri(Iri),
    Literal(Literal),
}

impl Node {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Node::Iri(i) => Some(i),
            Node::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Node::Literal(l) => Some(l),
            Node::Iri(_) => None,
        }
    }
}

impl From<Iri> for Node {
    fn from(i: Iri) -> Self {
        Node::Iri(i)
    }
}

impl From<Literal> for Node {
    fn from(l: Literal) -> Self {
        Node::Literal(l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RdfTriple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Node,
}

impl RdfTriple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Node>) -> Self {
        RdfTriple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}
