//! Prompt templates for each agent role.
//!
//! Placeholders are written `{name}`. Inputs are fenced in `<<<NAME ... NAME>>>`
//! blocks so both models and the offline agent can find them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type TemplateId = &'static str;

pub const EXTRACT_EAV: TemplateId = "extract_eav";
pub const RELATION_CANDIDATES: TemplateId = "relation_candidates";
pub const JUDGE: TemplateId = "judge";
pub const ADVERSARY: TemplateId = "adversary";
pub const ENTAILMENT: TemplateId = "entailment";

pub const TEMPLATE_IDS: &[TemplateId] = &[EXTRACT_EAV, RELATION_CANDIDATES, JUDGE, ADVERSARY, ENTAILMENT];

const EXTRACT_EAV_TEXT: &str = "\
You are a clinical information extraction agent working on an oncology report.
Extract every entity-attribute-value triple stated in the report. Type each entity
with one FHIR resource: Patient, Condition, Observation, Procedure,
MedicationStatement, ImagingStudy, DiagnosticReport, CarePlan, Practitioner, Specimen.
Answer with one record per line, exactly in this form:
entity=<entity> | type=<FHIR type> | attribute=<attribute> | value=<value>
Report only values written in the text. Use value=absent for negated findings.

<<<REPORT
{doc}
REPORT>>>
";

const RELATION_CANDIDATES_TEXT: &str = "\
You are a clinical relation discovery agent. Using the report and the known
entities and attributes, list typed relations linking them (diagnostic, temporal,
treatment). Use a short verb as predicate.
Answer with one relation per line: head | predicate | tail
Prompt variant: {variant}

<<<ENTITIES
{entities}
ENTITIES>>>
<<<ATTRIBUTES
{attributes}
ATTRIBUTES>>>
<<<REPORT
{doc}
REPORT>>>
";

const JUDGE_TEXT: &str = "\
You are a clinical verifier. Judge how plausible the relation is given the source
context. Answer with a single number between 0 and 1 and nothing else.
Relation: {head} | {predicate} | {tail}

<<<CONTEXT
{context}
CONTEXT>>>
";

const ADVERSARY_TEXT: &str = "\
You are an adversarial reviewer. A perturbed version of a relation is shown.
Decide whether the context, read against the perturbation, contradicts the
original relation. Answer with exactly one word: CONSISTENT, CONTRADICTORY or UNCLEAR.
Original: {head} | {predicate} | {tail}
Perturbed: {p_head} | {p_predicate} | {p_tail}

<<<CONTEXT
{context}
CONTEXT>>>
";

const ENTAILMENT_TEXT: &str = "\
Score from 0 to 1 how strongly the evidence entails the statement. Answer with a
single number.
Statement: {statement}

<<<EVIDENCE
{evidence}
EVIDENCE>>>
";

fn template_text(id: &str) -> Option<&'static str> {
    Some(match id {
        EXTRACT_EAV => EXTRACT_EAV_TEXT,
        RELATION_CANDIDATES => RELATION_CANDIDATES_TEXT,
        JUDGE => JUDGE_TEXT,
        ADVERSARY => ADVERSARY_TEXT,
        ENTAILMENT => ENTAILMENT_TEXT,
        _ => return None,
    })
}

/// Substitutes every `{name}` placeholder of a built-in template.
pub fn render_prompt(template_id: &str, context: &BTreeMap<&str, String>) -> Result<String> {
    let text = template_text(template_id).ok_or_else(|| Error::UnknownTemplate(template_id.to_string()))?;
    substitute(text, context)
}

pub(crate) fn substitute(template: &str, context: &BTreeMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder(&after[..close]) => {
                let name = &after[..close];
                let value = context
                    .get(name)
                    .ok_or_else(|| Error::MissingPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Returns the body of a `<<<NAME ... NAME>>>` block.
pub fn section<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<<<{name}\n");
    let close = format!("\n{name}>>>");
    let start = prompt.find(&open)? + open.len();
    let end = prompt[start..].find(&close)? + start;
    Some(&prompt[start..end])
}

/// Returns the remainder of the first line starting with `label`.
pub(crate) fn labeled_line<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}
