//! Deterministic grounding of EAV triples against their source narrative.
//!
//! Each triple runs through three stages of increasingly permissive matching.
//! A stage-1 hit means the triple is grounded, a stage-2 or stage-3 hit means
//! it was rescued, and a triple no stage can locate is counted as hallucinated.

mod fuzzy;
mod stages;
mod tables;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ClinicalReport;
use crate::extraction::EavTriple;
use crate::text::Span;

pub use fuzzy::{fuzzy_ratio, indel_distance};
pub use stages::Grounder;
pub use tables::GroundingTables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    Exact,
    Regex,
    Fuzzy,
    NGram,
    BooleanInference,
    CaseInsensitive,
    NegationPattern,
    Lemma,
    Synonym,
    SentenceNegation,
    TypoFix,
    ExplicitFix,
}

impl Technique {
    pub const ALL: [Technique; 12] = [
        Technique::Exact,
        Technique::Regex,
        Technique::Fuzzy,
        Technique::NGram,
        Technique::BooleanInference,
        Technique::CaseInsensitive,
        Technique::NegationPattern,
        Technique::Lemma,
        Technique::Synonym,
        Technique::SentenceNegation,
        Technique::TypoFix,
        Technique::ExplicitFix,
    ];

    pub fn stage(&self) -> u8 {
        use Technique::*;
        match self {
            Exact | Regex | Fuzzy | NGram | BooleanInference => 1,
            CaseInsensitive | NegationPattern | Lemma | Synonym => 2,
            SentenceNegation | TypoFix | ExplicitFix => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchStatus {
    Grounded,
    Rescued,
    Hallucinated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub triple_ref: String,
    pub stage: Option<u8>,
    pub technique: Option<Technique>,
    pub matched_span: Option<Span>,
    pub score: f64,
    pub status: MatchStatus,
}

impl MatchResult {
    pub(crate) fn hit(triple: &EavTriple, technique: Technique, span: Span, score: f64) -> Self {
        let stage = technique.stage();
        MatchResult {
            triple_ref: triple.id.clone(),
            stage: Some(stage),
            technique: Some(technique),
            matched_span: Some(span),
            score,
            status: if stage == 1 {
                MatchStatus::Grounded
            } else {
                MatchStatus::Rescued
            },
        }
    }

    pub(crate) fn miss(triple: &EavTriple) -> Self {
        MatchResult {
            triple_ref: triple.id.clone(),
            stage: None,
            technique: None,
            matched_span: None,
            score: 0.0,
            status: MatchStatus::Hallucinated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundingTotals {
    pub triples: usize,
    pub grounded: usize,
    pub rescued: usize,
    pub hallucinated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub patient_id: String,
    pub totals: GroundingTotals,
    /// Grounded fraction of triples.
    pub coverage: f64,
    /// Operational correctness: grounded or rescued, over all triples.
    pub correctness_rate: f64,
    pub hallucination_rate: f64,
    pub rescue_rate: f64,
    pub per_technique_counts: BTreeMap<Technique, usize>,
}

impl GroundingReport {
    pub fn from_results(patient_id: impl Into<String>, results: &[MatchResult]) -> Self {
        let mut totals = GroundingTotals {
            triples: results.len(),
            ..Default::default()
        };
        let mut per_technique_counts: BTreeMap<Technique, usize> =
            Technique::ALL.iter().map(|t| (*t, 0)).collect();
        for r in results {
            match r.status {
                MatchStatus::Grounded => totals.grounded += 1,
                MatchStatus::Rescued => totals.rescued += 1,
                MatchStatus::Hallucinated => totals.hallucinated += 1,
            }
            if let Some(t) = r.technique {
                *per_technique_counts.entry(t).or_default() += 1;
            }
        }
        Self::from_totals(patient_id, totals, per_technique_counts)
    }

    pub fn from_totals(
        patient_id: impl Into<String>,
        totals: GroundingTotals,
        per_technique_counts: BTreeMap<Technique, usize>,
    ) -> Self {
        let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        GroundingReport {
            patient_id: patient_id.into(),
            coverage: frac(totals.grounded, totals.triples),
            correctness_rate: frac(totals.grounded + totals.rescued, totals.triples),
            hallucination_rate: frac(totals.hallucinated, totals.triples),
            rescue_rate: frac(totals.rescued, totals.rescued + totals.hallucinated),
            totals,
            per_technique_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    /// Fuzzy window threshold on the 0..100 ratio scale.
    pub tau_fuzzy: f64,
    /// Token Jaccard threshold for phrase matching.
    pub gamma_ngram: f64,
    /// Per-token ratio threshold for typo correction.
    pub tau_typo: f64,
    /// How many tokens to the left a negation cue may sit.
    pub negation_window: usize,
    /// How many tokens to the right a trailing cue ("absent", "negative") may sit.
    pub trailing_window: usize,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            tau_fuzzy: 90.0,
            gamma_ngram: 0.6,
            tau_typo: 80.0,
            negation_window: 5,
            trailing_window: 3,
        }
    }
}

/// Runs all three stages over `triples`.
pub fn ground_triples(
    triples: &[EavTriple],
    report: &ClinicalReport,
    cfg: &GroundingConfig,
    tables: &GroundingTables,
) -> (Vec<MatchResult>, GroundingReport) {
    Grounder::new(cfg.clone(), tables.clone()).ground(triples, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn results(g: usize, r: usize, h: usize) -> Vec<MatchResult> {
        let t = EavTriple::new("x", "p", "Condition", "a", "v");
        let span = Span::new(0, 1);
        let mut out = Vec::new();
        out.extend((0..g).map(|_| MatchResult::hit(&t, Technique::Exact, span, 100.0)));
        out.extend((0..r).map(|_| MatchResult::hit(&t, Technique::Lemma, span, 100.0)));
        out.extend((0..h).map(|_| MatchResult::miss(&t)));
        out
    }

    #[test]
    fn report_rates() {
        let rep = GroundingReport::from_results("p", &results(6, 2, 2));
        assert_eq!(rep.totals.triples, 10);
        assert!((rep.coverage - 0.6).abs() < 1e-12);
        assert!((rep.hallucination_rate - 0.2).abs() < 1e-12);
        assert!((rep.rescue_rate - 0.5).abs() < 1e-12);
        assert!((rep.correctness_rate - 0.8).abs() < 1e-12);
        assert_eq!(rep.per_technique_counts.len(), 12);
        assert_eq!(rep.per_technique_counts[&Technique::Exact], 6);
    }

    #[test]
    fn empty_report() {
        let rep = GroundingReport::from_results("p", &[]);
        assert_eq!(rep.coverage, 0.0);
        assert_eq!(rep.correctness_rate, 0.0);
        assert_eq!(rep.hallucination_rate, 0.0);
        assert_eq!(rep.rescue_rate, 0.0);
    }

    #[test]
    fn result_invariants() {
        let t = EavTriple::new("x", "p", "Condition", "a", "v");
        let hit = MatchResult::hit(&t, Technique::TypoFix, Span::new(0, 2), 83.3);
        assert_eq!(hit.status, MatchStatus::Rescued);
        assert_eq!(hit.stage, Some(3));
        let miss = MatchResult::miss(&t);
        assert!(miss.matched_span.is_none());
        assert_eq!(miss.status, MatchStatus::Hallucinated);
    }
}
