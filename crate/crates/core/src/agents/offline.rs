//! Deterministic rule-based agent for offline runs.
//!
//! It answers every built-in template from the prompt alone: extraction from
//! `label: value` clauses, negations, procedures and medications; relations from
//! a small verb list; judge and adversary verdicts from token support in the
//! context. It is a stand-in for tests and demos, not a clinical extractor.

use std::collections::HashSet;

use regex::Regex;

use super::prompts::{labeled_line, section};
use super::{AgentRequest, AgentResponse, CompletionProvider, ProviderError, TokenProb};
use crate::corpus::segment_sentences;
use crate::extraction::{assign_fhir_type, FhirResourceType};
use crate::text::{casefold, folded_words, is_stopword};

pub const RELATION_VERBS: &[&str] = &[
    "confirmed", "confirms", "demonstrates", "determines", "indicates", "initiated", "requires",
    "revealed", "reveals", "showed", "shows", "started", "suggests", "supports", "treats",
    "verifies", "visualizes",
];

pub struct OfflineAgent {
    id: String,
    negation: Regex,
    procedure: Regex,
    medication: Regex,
}

impl Default for OfflineAgent {
    fn default() -> Self {
        OfflineAgent::new("offline")
    }
}

impl OfflineAgent {
    pub fn new(id: impl Into<String>) -> Self {
        OfflineAgent {
            id: id.into(),
            negation: Regex::new(r"(?i)\b(?:denies|denied|no|without|negative for)\s+([a-z][a-z\-]*(?:\s+[a-z][a-z\-]*)?)")
                .expect("static regex"),
            procedure: Regex::new(r"(?i)\bunderwent\s+(?:an?\s+|the\s+)?([A-Za-z][\w\-]*(?:\s+[A-Za-z][\w\-]*){0,2})")
                .expect("static regex"),
            medication: Regex::new(r"\b(?:started on|received|receiving|continues on)\s+([A-Z][\w\-]*)")
                .expect("static regex"),
        }
    }

    fn extract(&self, doc: &str) -> (String, Vec<TokenProb>) {
        let mut records: Vec<[String; 4]> = Vec::new();
        for sent in segment_sentences(doc) {
            let body = sent.text.trim_end_matches(['.', '!', '?']);
            for clause in body.split(';') {
                if let Some((label, value)) = clause.split_once(':') {
                    let label = last_words(label, 4);
                    let value = value.trim();
                    if !label.is_empty() && !value.is_empty() {
                        let ty = match assign_fhir_type(&label) {
                            FhirResourceType::Unknown => FhirResourceType::Observation,
                            t => t,
                        };
                        let attr = folded_words(&label).join("_");
                        records.push([ty.as_str().into(), ty.as_str().into(), attr, value.to_string()]);
                    }
                }
            }
            for cap in self.negation.captures_iter(body) {
                let term = trim_phrase(&cap[1]);
                if !term.is_empty() {
                    records.push(["Condition".into(), "Condition".into(), term, "absent".into()]);
                }
            }
            for cap in self.procedure.captures_iter(body) {
                let phrase = trim_phrase(&cap[1]);
                if !phrase.is_empty() {
                    records.push(["Procedure".into(), "Procedure".into(), "procedure".into(), phrase]);
                }
            }
            for cap in self.medication.captures_iter(body) {
                records.push([
                    "MedicationStatement".into(),
                    "MedicationStatement".into(),
                    "medication".into(),
                    cap[1].to_string(),
                ]);
            }
            if let Some((head, verb, tail)) = split_on_verb(body) {
                let head = last_words(head, 3);
                let tail = first_words(tail, 3);
                if !head.is_empty() && !tail.is_empty() {
                    let ty = assign_fhir_type(&head);
                    records.push([head, ty.as_str().into(), verb.to_string(), tail]);
                }
            }
        }

        let mut text = String::new();
        let mut probs = Vec::new();
        let mut seen = HashSet::new();
        for [entity, ty, attr, value] in records {
            if !seen.insert((entity.clone(), attr.clone(), value.clone())) {
                continue;
            }
            let prefix = format!("entity={entity} | type={ty} | attribute={attr} | value=");
            probs.push(TokenProb {
                token: prefix.clone(),
                prob: 1.0,
            });
            text.push_str(&prefix);
            for piece in split_keep_spaces(&value) {
                probs.push(TokenProb {
                    token: piece.to_string(),
                    prob: pseudo_prob(&entity, piece),
                });
                text.push_str(piece);
            }
            probs.push(TokenProb {
                token: "\n".into(),
                prob: 1.0,
            });
            text.push('\n');
        }
        (text, probs)
    }

    fn relations(&self, prompt: &str) -> String {
        let doc = section(prompt, "REPORT").unwrap_or("");
        let variant: u64 = labeled_line(prompt, "Prompt variant:")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        let known: Vec<String> = ["ENTITIES", "ATTRIBUTES"]
            .iter()
            .filter_map(|s| section(prompt, s))
            .flat_map(|s| s.lines())
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        let mut out = String::new();
        let mut seen = HashSet::new();
        for sent in segment_sentences(doc) {
            let body = sent.text.trim_end_matches(['.', '!', '?']);
            let Some((left, verb, right)) = split_on_verb(body) else {
                continue;
            };
            let right = right.split([',', ';']).next().unwrap_or("");
            let head = closest_known(left, &known, true).unwrap_or_else(|| last_words(left, 3));
            let tail = closest_known(right, &known, false).unwrap_or_else(|| first_words(right, 3));
            if head.is_empty() || tail.is_empty() || casefold(&head) == casefold(&tail) {
                continue;
            }
            let line = format!("{head} | {verb} | {tail}");
            if variant > 0 && stable_hash(&format!("{variant}:{line}")) % 4 == 0 {
                continue;
            }
            if seen.insert(line.clone()) {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }

    fn judge(&self, prompt: &str) -> Option<String> {
        let rel = labeled_line(prompt, "Relation:")?;
        let ctx = section(prompt, "CONTEXT")?;
        let s = support(rel, ctx);
        Some(format!("{:.2}", 0.3 + 0.7 * s))
    }

    fn adversary(&self, prompt: &str) -> Option<String> {
        let orig = labeled_line(prompt, "Original:")?;
        let pert = labeled_line(prompt, "Perturbed:")?;
        let ctx = section(prompt, "CONTEXT")?;
        let so = support(orig, ctx);
        let sp = support(pert, ctx);
        Some(
            if so < 0.5 {
                "CONTRADICTORY"
            } else if sp > so {
                "UNCLEAR"
            } else {
                "CONSISTENT"
            }
            .to_string(),
        )
    }

    fn entailment(&self, prompt: &str) -> Option<String> {
        let stmt = labeled_line(prompt, "Statement:")?;
        let ev = section(prompt, "EVIDENCE")?;
        Some(format!("{:.3}", support(stmt, ev)))
    }
}

impl CompletionProvider for OfflineAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_once(&self, request: &AgentRequest) -> Result<AgentResponse, ProviderError> {
        let p = &request.prompt;
        let text = if section(p, "ENTITIES").is_some() {
            Some(self.relations(p))
        } else if p.contains("\nPerturbed:") {
            self.adversary(p)
        } else if p.contains("\nRelation:") {
            self.judge(p)
        } else if p.contains("\nStatement:") {
            self.entailment(p)
        } else if let Some(doc) = section(p, "REPORT") {
            let (text, probs) = self.extract(doc);
            return Ok(AgentResponse {
                text,
                token_probs: request.want_token_probs.then_some(probs),
                provider_id: self.id.clone(),
            });
        } else {
            None
        };
        text.map(|t| AgentResponse::text(&self.id, t))
            .ok_or_else(|| ProviderError::Refusal("offline agent does not recognise this prompt".into()))
    }
}

fn split_on_verb(s: &str) -> Option<(&str, &'static str, &str)> {
    let lower = s.to_lowercase();
    if lower.len() != s.len() {
        return None;
    }
    let mut best: Option<(usize, &'static str)> = None;
    for v in RELATION_VERBS {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(v) {
            let at = from + pos;
            let before_ok = at == 0 || !lower.as_bytes()[at - 1].is_ascii_alphanumeric();
            let after = at + v.len();
            let after_ok = after == lower.len() || !lower.as_bytes()[after].is_ascii_alphanumeric();
            if before_ok && after_ok {
                if best.is_none_or(|(b, _)| at < b) {
                    best = Some((at, v));
                }
                break;
            }
            from = at + v.len();
        }
    }
    let (at, v) = best?;
    Some((&s[..at], v, &s[at + v.len()..]))
}

fn closest_known(part: &str, known: &[String], rightmost: bool) -> Option<String> {
    let hay = normalize_endpoint(part);
    let mut best: Option<(usize, usize, &String)> = None;
    for k in known {
        let needle = normalize_endpoint(k);
        if needle.is_empty() {
            continue;
        }
        let padded_hay = format!(" {hay} ");
        let padded = format!(" {needle} ");
        let found = if rightmost {
            padded_hay.rfind(&padded)
        } else {
            padded_hay.find(&padded)
        };
        if let Some(pos) = found {
            let better = match best {
                None => true,
                Some((bp, blen, _)) => {
                    if rightmost {
                        pos + needle.len() > bp + blen || (pos + needle.len() == bp + blen && needle.len() > blen)
                    } else {
                        pos < bp || (pos == bp && needle.len() > blen)
                    }
                }
            };
            if better {
                best = Some((pos, needle.len(), k));
            }
        }
    }
    best.map(|(_, _, k)| k.clone())
}

fn normalize_endpoint(s: &str) -> String {
    folded_words(&s.replace('_', " ")).join(" ")
}

fn trim_phrase(s: &str) -> String {
    let words: Vec<&str> = s
        .split_whitespace()
        .take_while(|w| !matches!(w.to_lowercase().as_str(), "and" | "or" | "on" | "of" | "with" | "which" | "at"))
        .collect();
    words.join(" ")
}

fn content_words(s: &str) -> Vec<&str> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '/' && c != '.'))
        .filter(|w| !w.is_empty() && !is_stopword(&w.to_lowercase()))
        .collect()
}

fn last_words(s: &str, n: usize) -> String {
    let w = content_words(s);
    let k = w.len().saturating_sub(n);
    w[k..].join(" ")
}

fn first_words(s: &str, n: usize) -> String {
    content_words(s).into_iter().take(n).collect::<Vec<_>>().join(" ")
}

fn split_keep_spaces(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == ' ' {
            out.push(&s[start..=i]);
            start = i + 1;
        }
    }
    if start < s.len() {
        out.push(&s[start..]);
    }
    out
}

fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn pseudo_prob(entity: &str, token: &str) -> f64 {
    let u = (stable_hash(&format!("{entity}\u{1f}{token}")) % 1000) as f64 / 1000.0;
    let p = 0.35 + 0.65 * u;
    (p * 1000.0).round() / 1000.0
}

/// Fraction of the statement's content words found in the context; words of five
/// or more letters also match on a shared five-letter prefix.
fn support(statement: &str, context: &str) -> f64 {
    let ctx: Vec<String> = folded_words(context);
    let words: Vec<String> = folded_words(&statement.replace(['|', '_'], " "))
        .into_iter()
        .filter(|w| !is_stopword(w))
        .collect();
    if words.is_empty() {
        return 0.0;
    }
    let hit = words
        .iter()
        .filter(|w| {
            ctx.iter().any(|c| {
                c == *w || (w.len() >= 5 && c.len() >= 5 && c.get(..5) == w.get(..5))
            })
        })
        .count();
    hit as f64 / words.len() as f64
}
