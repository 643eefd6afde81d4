//! Relation candidates between extracted entities and attributes, and the
//! scores used to decide which of them to keep.
//!
//! Candidates come from the relation agent and are anchored onto known EAV
//! endpoints. Each one is then judged for plausibility (J), attacked with
//! perturbations (ξ), checked for self-consistency across prompt variants (C)
//! and aligned with the source sentences (R). See [`trust`] for how these
//! combine.

pub mod trust;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::prompts::{ADVERSARY, ENTAILMENT, JUDGE, RELATION_CANDIDATES};
use crate::agents::{complete, render_prompt, AgentRequest, AgentRole, CompletionProvider, RetryPolicy};
use crate::corpus::ClinicalReport;
use crate::error::{Error, Result};
use crate::extraction::EavTriple;
use crate::grounding::fuzzy_ratio;
use crate::text::{casefold, folded_words, is_stopword};

pub use trust::{
    composite_trust, consensus_accept, filter_trusted, passes_trust, redundancy_pairs, semantic_gaps, Consensus,
    QuarantineReason, QuarantineRecord, RedundancyCluster, TrustScore, TrustWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    EE,
    EA,
    AA,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationScores {
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub xi: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationTriple {
    pub head: String,
    pub predicate: String,
    pub tail: String,
    pub kind: RelationKind,
    pub source: String,
    pub generator_id: String,
    /// Whether head and tail were matched to known EAV endpoints.
    pub anchored: (bool, bool),
    pub scores: RelationScores,
}

impl RelationTriple {
    pub fn new(head: impl Into<String>, predicate: impl Into<String>, tail: impl Into<String>, kind: RelationKind) -> Self {
        RelationTriple {
            head: head.into(),
            predicate: predicate.into(),
            tail: tail.into(),
            kind,
            source: String::new(),
            generator_id: String::new(),
            anchored: (true, true),
            scores: RelationScores::default(),
        }
    }

    /// "head predicate tail", underscores as spaces.
    pub fn verbalize(&self) -> String {
        format!("{} {} {}", self.head, self.predicate, self.tail).replace('_', " ")
    }

    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.head, &self.predicate, &self.tail)
    }
}

impl fmt::Display for RelationTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.head, self.predicate, self.tail)
    }
}

/// Predicate synonym table shared by canonical equality and redundancy.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateNormalizer {
    table: BTreeMap<String, String>,
}

impl Default for PredicateNormalizer {
    fn default() -> Self {
        let mut n = PredicateNormalizer { table: BTreeMap::new() };
        for (from, to) in [
            ("confirmed", "confirms"),
            ("verifies", "confirms"),
            ("verified", "confirms"),
            ("suggests", "indicates"),
            ("suggested", "indicates"),
            ("indicated", "indicates"),
            ("revealed", "shows"),
            ("reveals", "shows"),
            ("showed", "shows"),
            ("demonstrates", "shows"),
            ("started", "initiated"),
        ] {
            n.add(from, to);
        }
        n
    }
}

impl PredicateNormalizer {
    pub fn empty() -> Self {
        PredicateNormalizer { table: BTreeMap::new() }
    }

    pub fn add(&mut self, from: &str, to: &str) {
        self.table.insert(casefold(from.trim()), casefold(to.trim()));
    }

    pub fn normalize(&self, predicate: &str) -> String {
        let p = folded_words(&predicate.replace('_', " ")).join(" ");
        self.table.get(&p).cloned().unwrap_or(p)
    }

    /// Casefolded endpoints and normalized predicate.
    pub fn canonical(&self, t: &RelationTriple) -> (String, String, String) {
        let fold = |s: &str| folded_words(&s.replace('_', " ")).join(" ");
        (fold(&t.head), self.normalize(&t.predicate), fold(&t.tail))
    }

    pub fn verbalize(&self, t: &RelationTriple) -> String {
        let (h, p, tl) = self.canonical(t);
        format!("{h} {p} {tl}")
    }
}

/// EE if both endpoints are entities, AA if neither is, EA otherwise.
/// Endpoints matching neither list count as attributes, so only the entity
/// list decides.
pub fn classify_kind(head: &str, tail: &str, known_entities: &[String], _known_attributes: &[String]) -> RelationKind {
    let is_entity = |x: &str| {
        let f = endpoint_key(x);
        known_entities.iter().any(|e| endpoint_key(e) == f)
    };
    match (is_entity(head), is_entity(tail)) {
        (true, true) => RelationKind::EE,
        (false, false) => RelationKind::AA,
        _ => RelationKind::EA,
    }
}

fn endpoint_key(s: &str) -> String {
    folded_words(&s.replace('_', " ")).join(" ")
}

/// Endpoint vocabulary for a report: EAV entities, and EAV attributes plus
/// short non-numeric values.
pub fn known_endpoints(eavs: &[EavTriple]) -> (Vec<String>, Vec<String>) {
    let mut entities = BTreeSet::new();
    let mut attributes = BTreeSet::new();
    for e in eavs {
        entities.insert(e.entity.trim().to_string());
        attributes.insert(e.attribute.replace('_', " ").trim().to_string());
        let v = e.value.trim();
        let words = v.split_whitespace().count();
        if (1..=4).contains(&words) && v.chars().any(char::is_alphabetic) && !v.chars().any(|c| c.is_ascii_digit()) {
            attributes.insert(v.to_string());
        }
    }
    entities.retain(|s| !s.is_empty());
    attributes.retain(|s| !s.is_empty() && !entities.contains(s));
    (entities.into_iter().collect(), attributes.into_iter().collect())
}

/// Case-insensitive exact match first, then the best fuzzy match at or above `tau`.
fn anchor(raw: &str, known: &[&String], tau: f64) -> Option<String> {
    let key = endpoint_key(raw);
    if let Some(k) = known.iter().find(|k| endpoint_key(k) == key) {
        return Some((*k).clone());
    }
    let mut best: Option<(f64, &String)> = None;
    for k in known {
        let r = fuzzy_ratio(&key, &endpoint_key(k));
        if r >= tau && best.is_none_or(|(b, bk)| r > b || (r == b && *k < bk)) {
            best = Some((r, k));
        }
    }
    best.map(|(_, k)| k.clone())
}

/// Parses `head | predicate | tail` lines. Empty output is an empty list;
/// non-empty output without a single valid line is an error.
pub fn parse_relations(
    text: &str,
    known_entities: &[String],
    known_attributes: &[String],
    tau_fuzzy: f64,
) -> Result<Vec<RelationTriple>> {
    let known: Vec<&String> = known_entities.iter().chain(known_attributes).collect();
    let mut out = Vec::new();
    let mut any_line = false;
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        any_line = true;
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        let [h, p, t] = parts[..] else { continue };
        if h.is_empty() || p.is_empty() || t.is_empty() {
            continue;
        }
        let head_anchor = anchor(h, &known, tau_fuzzy);
        let tail_anchor = anchor(t, &known, tau_fuzzy);
        let head = head_anchor.clone().unwrap_or_else(|| h.to_string());
        let tail = tail_anchor.clone().unwrap_or_else(|| t.to_string());
        if endpoint_key(&head) == endpoint_key(&tail) {
            continue;
        }
        let mut rel = RelationTriple::new(
            head.clone(),
            p,
            tail.clone(),
            classify_kind(&head, &tail, known_entities, known_attributes),
        );
        rel.anchored = (head_anchor.is_some(), tail_anchor.is_some());
        out.push(rel);
    }
    if any_line && out.is_empty() {
        return Err(Error::RelationParse { raw: text.to_string() });
    }
    Ok(out)
}

/// Asks `provider` for relations in `report` and anchors them on the EAV endpoints.
pub fn generate_candidates(
    report: &ClinicalReport,
    eavs: &[EavTriple],
    provider: &dyn CompletionProvider,
    role: AgentRole,
    retry: &RetryPolicy,
    variant: usize,
    tau_fuzzy: f64,
) -> Result<Vec<RelationTriple>> {
    let (entities, attributes) = known_endpoints(eavs);
    let mut ctx = BTreeMap::new();
    ctx.insert("variant", variant.to_string());
    ctx.insert("entities", entities.join("\n"));
    ctx.insert("attributes", attributes.join("\n"));
    ctx.insert("doc", report.narrative.clone());
    let mut request = AgentRequest::new(role, render_prompt(RELATION_CANDIDATES, &ctx)?);
    if variant > 0 {
        request = request.with_temperature(0.7);
    }
    let response = complete(&request, provider, retry)?;
    let mut rels = parse_relations(&response.text, &entities, &attributes, tau_fuzzy)?;
    for r in &mut rels {
        r.source = report.patient_id.clone();
        r.generator_id = response.provider_id.clone();
    }
    Ok(rels)
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)").expect("static regex"));

/// Reads a single score from an agent answer and clamps it to [0, 1].
pub fn parse_score(text: &str) -> Result<f64> {
    let mut found = NUMBER.find_iter(text);
    let first = found
        .next()
        .ok_or_else(|| Error::Judgment(format!("no numeric score in {text:?}")))?;
    if found.next().is_some() {
        return Err(Error::Judgment(format!("ambiguous score in {text:?}")));
    }
    let v: f64 = first
        .as_str()
        .parse()
        .map_err(|_| Error::Judgment(format!("bad number {:?}", first.as_str())))?;
    if !(0.0..=1.0).contains(&v) {
        log::warn!("score {v} outside [0, 1], clamped");
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Plausibility J of `triple` given `context`.
pub fn judge(triple: &RelationTriple, context: &str, provider: &dyn CompletionProvider, retry: &RetryPolicy) -> Result<f64> {
    if context.trim().is_empty() {
        return Err(Error::EmptyInput("judge context".into()));
    }
    let mut ctx = BTreeMap::new();
    ctx.insert("head", triple.head.clone());
    ctx.insert("predicate", triple.predicate.clone());
    ctx.insert("tail", triple.tail.clone());
    ctx.insert("context", context.to_string());
    let request = AgentRequest::new(AgentRole::Judge, render_prompt(JUDGE, &ctx)?);
    parse_score(&complete(&request, provider, retry)?.text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Contradictory,
    Unclear,
}

impl Verdict {
    /// Anything outside the response vocabulary is `Unclear`.
    pub fn parse(text: &str) -> Verdict {
        match text.trim().trim_end_matches('.').to_ascii_uppercase().as_str() {
            "CONSISTENT" => Verdict::Consistent,
            "CONTRADICTORY" => Verdict::Contradictory,
            _ => Verdict::Unclear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub original: RelationTriple,
    pub variants: Vec<(RelationTriple, Verdict)>,
}

const OPPOSITES: &[(&str, &str)] = &[
    ("confirms", "rules out"),
    ("indicates", "excludes"),
    ("shows", "does not show"),
    ("treats", "worsens"),
    ("requires", "precludes"),
    ("determines", "is unrelated to"),
    ("supports", "refutes"),
    ("visualizes", "obscures"),
    ("initiated", "discontinued"),
];

/// Up to `n` deterministic perturbations: swapped endpoints, negated
/// predicate, opposite predicate, and head or tail replaced by another known
/// endpoint.
pub fn perturb(triple: &RelationTriple, endpoints: &[String], normalizer: &PredicateNormalizer, n: usize) -> Vec<RelationTriple> {
    let with = |h: &str, p: &str, t: &str| {
        let mut v = triple.clone();
        v.head = h.to_string();
        v.predicate = p.to_string();
        v.tail = t.to_string();
        v.scores = RelationScores::default();
        v
    };
    let p = &triple.predicate;
    let canon = normalizer.normalize(p);
    let opposite = OPPOSITES
        .iter()
        .find(|(a, _)| *a == canon)
        .map(|(_, b)| b.to_string())
        .unwrap_or_else(|| format!("contradicts {p}"));
    let others: Vec<&String> = endpoints
        .iter()
        .filter(|e| endpoint_key(e) != endpoint_key(&triple.head) && endpoint_key(e) != endpoint_key(&triple.tail))
        .collect();
    let mut out = vec![
        with(&triple.tail, p, &triple.head),
        with(&triple.head, &format!("does not {p}"), &triple.tail),
        with(&triple.head, &opposite, &triple.tail),
    ];
    if let Some(o) = others.first() {
        out.push(with(&triple.head, p, o));
    }
    if let Some(o) = others.get(1).or(others.first()) {
        out.push(with(o, p, &triple.tail));
    }
    let mut k = 2;
    while out.len() < n && k < others.len() {
        out.push(with(&triple.head, p, others[k]));
        k += 1;
    }
    out.truncate(n);
    out
}

/// Runs the adversary over every perturbation of `triple`.
pub fn adversarial_check(
    triple: &RelationTriple,
    perturbations: Vec<RelationTriple>,
    context: &str,
    provider: &dyn CompletionProvider,
    retry: &RetryPolicy,
) -> Result<PerturbationSet> {
    let mut variants = Vec::with_capacity(perturbations.len());
    for p in perturbations {
        let mut ctx = BTreeMap::new();
        ctx.insert("head", triple.head.clone());
        ctx.insert("predicate", triple.predicate.clone());
        ctx.insert("tail", triple.tail.clone());
        ctx.insert("p_head", p.head.clone());
        ctx.insert("p_predicate", p.predicate.clone());
        ctx.insert("p_tail", p.tail.clone());
        ctx.insert("context", context.to_string());
        let request = AgentRequest::new(AgentRole::Adversary, render_prompt(ADVERSARY, &ctx)?);
        let verdict = Verdict::parse(&complete(&request, provider, retry)?.text);
        variants.push((p, verdict));
    }
    Ok(PerturbationSet {
        original: triple.clone(),
        variants,
    })
}

/// ξ: share of perturbations judged contradictory.
pub fn contradiction_rate(pset: &PerturbationSet) -> Result<f64> {
    if pset.variants.is_empty() {
        return Err(Error::EmptyInput("perturbation set has no variants".into()));
    }
    let bad = pset.variants.iter().filter(|(_, v)| *v == Verdict::Contradictory).count();
    Ok(bad as f64 / pset.variants.len() as f64)
}

/// C: fraction of variant sets containing `triple` under canonical equality.
pub fn self_consistency(triple: &RelationTriple, variant_sets: &[Vec<RelationTriple>], normalizer: &PredicateNormalizer) -> Result<f64> {
    if variant_sets.is_empty() {
        return Err(Error::EmptyInput("no variant sets".into()));
    }
    let key = normalizer.canonical(triple);
    let hits = variant_sets
        .iter()
        .filter(|set| set.iter().any(|t| normalizer.canonical(t) == key))
        .count();
    Ok(hits as f64 / variant_sets.len() as f64)
}

fn content_set(s: &str) -> BTreeSet<String> {
    folded_words(&s.replace('_', " ")).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// Token-overlap F1 between two texts, stopwords removed.
pub fn overlap_f1(a: &str, b: &str) -> f64 {
    let (x, y) = (content_set(a), content_set(b));
    let common = x.intersection(&y).count();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / x.len() as f64;
    let r = common as f64 / y.len() as f64;
    2.0 * p * r / (p + r)
}

/// R: best overlap F1 between the verbalized triple and any report sentence.
pub fn evidence_alignment(triple: &RelationTriple, report: &ClinicalReport) -> f64 {
    let v = triple.verbalize();
    report
        .sentences
        .iter()
        .map(|s| overlap_f1(&v, &s.text))
        .fold(0.0, f64::max)
}

/// R from an entailment agent instead of token overlap; scored against the
/// sentences that share at least one content word with the triple.
pub fn evidence_alignment_agent(
    triple: &RelationTriple,
    report: &ClinicalReport,
    provider: &dyn CompletionProvider,
    retry: &RetryPolicy,
) -> Result<f64> {
    let v = triple.verbalize();
    let evidence: Vec<&str> = report
        .sentences
        .iter()
        .filter(|s| overlap_f1(&v, &s.text) > 0.0)
        .map(|s| s.text.as_str())
        .collect();
    if evidence.is_empty() {
        return Ok(0.0);
    }
    let mut ctx = BTreeMap::new();
    ctx.insert("statement", v);
    ctx.insert("evidence", evidence.join("\n"));
    let request = AgentRequest::new(AgentRole::Judge, render_prompt(ENTAILMENT, &ctx)?);
    parse_score(&complete(&request, provider, retry)?.text)
}

/// Sentences mentioning either endpoint, or the whole report if none do.
pub fn relation_context(triple: &RelationTriple, report: &ClinicalReport) -> String {
    let h = content_set(&triple.head);
    let t = content_set(&triple.tail);
    let picked: Vec<&str> = report
        .sentences
        .iter()
        .filter(|s| {
            let w = content_set(&s.text);
            !w.is_disjoint(&h) || !w.is_disjoint(&t)
        })
        .map(|s| s.text.as_str())
        .collect();
    if picked.is_empty() {
        report.narrative.clone()
    } else {
        picked.join(" ")
    }
}
