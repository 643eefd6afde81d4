//! EAV triples to RDF.
//!
//! Each EAV becomes an entity node typed with its FHIR class and one attribute
//! edge. Numeric values are sniffed into decimal literals; when only a numeric
//! prefix was kept (`"1.2 mg/dL"`) the original text rides along on a
//! `kg:originalValue` edge.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use super::model::{Datatype, Iri, Literal, Node, RdfTriple, FHIR, KG};
use crate::error::{Error, Result};
use crate::extraction::{EavTriple, FhirResourceType};
use crate::text::{pascal_case, slug};

static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[-+]?\d+(\.\d+)?$").expect("static regex"));
static NUMERIC_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([-+]?\d+(?:\.\d+)?)\s*[A-Za-z%µ][A-Za-z%µ/0-9.^]*$").expect("static regex"));

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Unmapped attributes are an error instead of falling back to `kg:has<Attr>`.
    pub strict: bool,
}

fn kg(local: &str) -> Result<Iri> {
    Iri::new(format!("{KG}{local}"))
}

/// `kg:<pid>` for the patient, `kg:<pid>/<entity-slug>` for everything else.
pub fn entity_iri(eav: &EavTriple) -> Result<Iri> {
    let pid = slug(&eav.source.patient_id);
    if eav.fhir_type == FhirResourceType::Patient || slug(&eav.entity) == "patient" {
        return kg(&pid);
    }
    kg(&format!("{pid}/{}", slug(&eav.entity)))
}

/// Predicate used for an unmapped attribute. Names already in `hasX` form are kept.
pub fn attribute_iri(attribute: &str) -> Result<Iri> {
    if attribute.strip_prefix("has").and_then(|r| r.chars().next()).is_some_and(|c| c.is_ascii_uppercase())
        && attribute.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return kg(attribute);
    }
    let p = pascal_case(&attribute.replace('_', " "));
    if p.is_empty() {
        return Err(Error::Encoding(format!("attribute {attribute:?} has no usable name")));
    }
    kg(&format!("has{p}"))
}

/// Typed value node plus the original text when sniffing dropped a suffix.
pub fn value_literal(value: &str) -> (Literal, Option<String>) {
    let v = value.trim();
    if DECIMAL.is_match(v) {
        let lex = v.strip_prefix('+').unwrap_or(v);
        return (Literal::new(lex, Datatype::Decimal).expect("checked by regex"), None);
    }
    match v {
        "true" | "false" => return (Literal::boolean(v == "true"), None),
        _ => {}
    }
    if let Some(c) = NUMERIC_PREFIX.captures(v) {
        let lex = c[1].strip_prefix('+').unwrap_or(&c[1]);
        return (Literal::new(lex, Datatype::Decimal).expect("checked by regex"), Some(value.to_string()));
    }
    (Literal::string(value), None)
}

/// Encodes one EAV. `attr_map` maps raw attribute strings to ontology IRIs.
pub fn encode_eav(eav: &EavTriple, attr_map: &BTreeMap<String, Iri>, opts: EncodeOptions) -> Result<Vec<RdfTriple>> {
    let subject = entity_iri(eav)?;
    let class = Iri::new(format!("{FHIR}{}", eav.fhir_type.as_str()))?;
    let predicate = match attr_map.get(&eav.attribute) {
        Some(iri) => iri.clone(),
        None if opts.strict => {
            return Err(Error::Encoding(format!(
                "attribute {:?} of {} has no ontology mapping",
                eav.attribute, eav.id
            )))
        }
        None => attribute_iri(&eav.attribute)?,
    };
    let (lit, original) = value_literal(&eav.value);
    let mut out = vec![
        RdfTriple::new(subject.clone(), Iri::rdf_type(), class),
        RdfTriple::new(subject.clone(), predicate, Node::Literal(lit)),
    ];
    if let Some(o) = original {
        out.push(RdfTriple::new(subject, kg("originalValue")?, Literal::string(o)));
    }
    Ok(out)
}
