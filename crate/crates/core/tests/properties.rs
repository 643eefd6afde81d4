//! Property tests for the cross-module invariants.

use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use kgf_core::agents::{complete, AgentRequest, AgentRole, CompletionProvider, MockProvider, NgramHashEmbedder, OfflineAgent, RetryPolicy};
use kgf_core::corpus::{load_corpus, ClinicalReport, Cohort};
use kgf_core::extraction::{extract_eav, EavTriple, ExtractionOptions};
use kgf_core::graph::{parse_rules, reason, serialize_ntriples, GraphStore, Iri, Literal, Datatype, RdfTriple};
use kgf_core::grounding::{fuzzy_ratio, GroundingReport, Grounder, MatchStatus, Technique};
use kgf_core::metrics::summarize_eav;
use kgf_core::ontology::{map_concept, parse_vocab, UriPolicy, VocabIndex, Vocabulary};
use kgf_core::relations::{
    composite_trust, consensus_accept, redundancy_pairs, PredicateNormalizer, RelationKind, RelationTriple, TrustWeights,
};
use proptest::prelude::*;

fn kg(s: &str) -> Iri {
    Iri::new(format!("http://example.org/kg#{s}")).unwrap()
}

const VOCAB: &str = "SNOMED\t267036007\tWeight loss\tloss of weight\n\
SNOMED\t18441004\tJaundice\n\
SNOMED\t35917007\tAdenocarcinoma\n\
LOINC\t24108-3\tCancer Ag 19-9\tCA 19-9\n\
RXNORM\t1736776\tFOLFIRINOX\n\
ICD\tC25.0\tMalignant neoplasm of head of pancreas\n\
GO\t0008283\tCell population proliferation\n";

const SYMPTOMS: &[&str] = &["nausea", "fever", "chills", "jaundice", "pruritus", "dysphagia", "ascites", "fatigue"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corpus_load_is_deterministic(docs in prop::collection::vec(("[A-Z][0-9]{2}", "[A-Za-z .:;0-9]{1,80}"), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("pdac")).unwrap();
        for (id, text) in &docs {
            fs::write(dir.path().join("pdac").join(format!("{id}.txt")), text).unwrap();
        }
        let a = load_corpus(dir.path(), None).unwrap();
        let b = load_corpus(dir.path(), None).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.reports).unwrap(), serde_json::to_string(&b.reports).unwrap());
    }

    #[test]
    fn mock_completion_is_pure(prompt in "[a-z ]{1,40}") {
        let provider = MockProvider::new("m", None).with_fallback(Arc::new(OfflineAgent::default()));
        let req = AgentRequest::new(AgentRole::Judge, format!("Context:\n{prompt}\nTriple:\n{prompt}"));
        let before = req.clone();
        let r1 = complete(&req, &provider, &RetryPolicy::no_delay(0));
        let r2 = complete(&req, &provider, &RetryPolicy::no_delay(0));
        prop_assert_eq!(&req, &before);
        prop_assert_eq!(format!("{r1:?}"), format!("{r2:?}"));
    }

    #[test]
    fn offline_extraction_is_deterministic(value in 1u32..5000, unit in "(mg|kg|U/mL)", sym in prop::sample::select(SYMPTOMS)) {
        let text = format!("CA19-9: {value} {unit}. Patient denies {sym}. Started on FOLFIRINOX.");
        let report = ClinicalReport::from_text("p1", Cohort::Pdac, text);
        let provider = MockProvider::new("x", None).with_fallback(Arc::new(OfflineAgent::default()));
        let opts = ExtractionOptions::default();
        let a = extract_eav(&report, &provider, &RetryPolicy::no_delay(0), &opts).unwrap();
        let b = extract_eav(&report, &provider, &RetryPolicy::no_delay(0), &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fuzzy_symmetric_and_exact(a in "[a-dé ]{0,20}", b in "[a-dé ]{0,20}") {
        prop_assert_eq!(fuzzy_ratio(&a, &b), fuzzy_ratio(&b, &a));
        prop_assert_eq!(fuzzy_ratio(&a, &b) == 100.0, a == b);
    }

    #[test]
    fn grounding_counts_sum(values in prop::collection::vec("[a-z]{1,8}( [a-z]{1,8})?", 0..25)) {
        let report = ClinicalReport::from_text("p", Cohort::Brca, "Mammogram revealed spiculated mass. No adenopathy. HER2 negative.");
        let triples: Vec<EavTriple> = values
            .iter()
            .enumerate()
            .map(|(i, v)| EavTriple::new(format!("p#{i}"), "p", "Observation", "finding", v.as_str()))
            .collect();
        let (results, rep) = Grounder::default().ground(&triples, &report);
        let t = rep.totals;
        prop_assert_eq!(t.grounded + t.rescued + t.hallucinated, triples.len());
        prop_assert_eq!(results.len(), triples.len());
    }

    #[test]
    fn negation_templates(sym in prop::sample::select(SYMPTOMS), cue in prop::sample::select(&["denies", "no"][..]), lead in "(Patient|She|Today he)") {
        let text = format!("{lead} {cue} {sym}.");
        let report = ClinicalReport::from_text("p", Cohort::Pdac, text);
        let g = Grounder::default();
        let present = g.stage1_match(&EavTriple::new("a", "p", "Observation", sym, "present"), &report);
        prop_assert!(present.is_none_or(|m| m.technique != Some(Technique::BooleanInference)));
        let absent = g.stage1_match(&EavTriple::new("b", "p", "Observation", sym, "absent"), &report);
        prop_assert_eq!(absent.and_then(|m| m.technique), Some(Technique::BooleanInference));
    }

    #[test]
    fn mapping_invariants(raw in "[A-Za-z ]{1,20}", alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let embedder = Arc::new(NgramHashEmbedder::default());
        let mut terms = parse_vocab(VOCAB, &UriPolicy::default()).terms;
        let a = VocabIndex::new(terms.clone(), embedder.clone()).unwrap();
        let mut s = seed;
        for i in (1..terms.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            terms.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = VocabIndex::new(terms, embedder).unwrap();
        let ma = map_concept(&raw, &a, alpha, 0.0).unwrap();
        let mb = map_concept(&raw, &b, alpha, 0.0).unwrap();
        prop_assert_eq!(&ma, &mb);
        if let Some(m) = ma {
            prop_assert!((m.score - (alpha * m.sim_lex + (1.0 - alpha) * m.sim_sem)).abs() <= 1e-12);
            let at1 = map_concept(&raw, &a, 1.0, 0.0).unwrap().unwrap();
            prop_assert_eq!(at1.score, at1.sim_lex);
            let at0 = map_concept(&raw, &a, 0.0, 0.0).unwrap().unwrap();
            prop_assert_eq!(at0.score, at0.sim_sem);
        }
    }

    #[test]
    fn minting_is_injective(a in "[A-Za-z0-9./%-]{1,10}", b in "[A-Za-z0-9./%-]{1,10}") {
        let p = UriPolicy::default();
        for v in Vocabulary::ALL {
            let (ua, ub) = (p.mint(v, &a).unwrap(), p.mint(v, &b).unwrap());
            prop_assert_eq!(ua == ub, a == b);
        }
        let snomed = p.mint(Vocabulary::Snomed, "267036007").unwrap();
        prop_assert_eq!(snomed.as_str(), "http://snomed.info/id/267036007");
    }

    #[test]
    fn trust_monotone_and_scaling(r in 0.0f64..=1.0, c in 0.0f64..=1.0, j in 0.0f64..=1.0, d in 0.0f64..=0.5, k in 0.01f64..=1.0) {
        let w = TrustWeights::default();
        let t = composite_trust(Some(r), Some(c), Some(j), w).unwrap().t;
        for (dr, dc, dj) in [(d, 0.0, 0.0), (0.0, d, 0.0), (0.0, 0.0, d)] {
            let up = composite_trust(Some((r + dr).min(1.0)), Some((c + dc).min(1.0)), Some((j + dj).min(1.0)), w).unwrap().t;
            prop_assert!(up >= t - 1e-15);
        }
        let scaled = composite_trust(Some(k * r), Some(k * c), Some(k * j), w).unwrap().t;
        prop_assert!((scaled - k * t).abs() <= 1e-12);
        if (t - 0.65).abs() > 1e-9 {
            prop_assert_eq!(scaled >= k * 0.65, t >= 0.65);
        }
    }

    #[test]
    fn consensus_symmetric(mask in prop::collection::vec(0u8..8, 1..12)) {
        let normalizer = PredicateNormalizer::default();
        let make = |bit: u8| -> Vec<RelationTriple> {
            mask.iter()
                .enumerate()
                .filter(|(_, m)| *m & bit != 0)
                .map(|(i, _)| RelationTriple::new(format!("e{}", i % 3), "shows", format!("a{i}"), RelationKind::EA))
                .collect()
        };
        let sets = [make(1), make(2), make(4)];
        let names = ["m1", "m2", "m3"];
        let run = |order: [usize; 3]| {
            let per: BTreeMap<String, Vec<RelationTriple>> =
                order.iter().enumerate().map(|(slot, &i)| (names[slot].to_string(), sets[i].clone())).collect();
            let c = consensus_accept(&per, &normalizer, &|_| false).unwrap();
            c.accepted.iter().map(|t| t.to_string()).collect::<Vec<_>>()
        };
        let base = run([0, 1, 2]);
        prop_assert_eq!(&base, &run([2, 0, 1]));
        prop_assert_eq!(&base, &run([1, 2, 0]));
    }

    #[test]
    fn redundancy_partitions(ts in prop::collection::vec((0usize..4, prop::sample::select(&["confirms", "verifies", "shows"][..]), 0usize..4, 0.0f64..1.0), 0..10)) {
        let triples: Vec<RelationTriple> = ts
            .iter()
            .map(|(h, p, t, score)| {
                let mut r = RelationTriple::new(format!("biopsy {h}"), *p, format!("carcinoma {t}"), RelationKind::EE);
                r.scores.t = Some(*score);
                r
            })
            .collect();
        let clusters = redundancy_pairs(&triples, &NgramHashEmbedder::default(), 0.85, &PredicateNormalizer::default()).unwrap();
        let mut seen: Vec<usize> = clusters.iter().flat_map(|c| c.members.clone()).collect();
        seen.sort();
        prop_assert_eq!(seen, (0..triples.len()).collect::<Vec<_>>());
        for c in &clusters {
            let best = c.members.iter().map(|&i| triples[i].scores.t.unwrap()).fold(f64::MIN, f64::max);
            prop_assert_eq!(triples[c.representative].scores.t.unwrap(), best);
        }
    }

    #[test]
    fn inference_is_monotone(vals in prop::collection::vec((0u32..2000, 0u32..30), 1..8)) {
        let rules = parse_rules(
            "@prefix kg: <http://example.org/kg#>\n\
             (rule r1 ((kg:Patient ?p) (kg:ca ?p ?a) (greaterThan ?a 1000)) (kg:Flagged ?p))\n\
             (rule r2 ((kg:Flagged ?p) (kg:wl ?p ?w) (greaterThan ?w 10)) (kg:HighRiskPatient ?p))\n",
        ).unwrap();
        let mut g = GraphStore::new();
        for (i, (ca, wl)) in vals.iter().enumerate() {
            let p = kg(&format!("p{i}"));
            g.insert(RdfTriple::new(p.clone(), Iri::rdf_type(), kg("Patient")));
            g.insert(RdfTriple::new(p.clone(), kg("ca"), Literal::new(ca.to_string(), Datatype::Integer).unwrap()));
            g.insert(RdfTriple::new(p, kg("wl"), Literal::new(wl.to_string(), Datatype::Integer).unwrap()));
        }
        let before: Vec<RdfTriple> = g.iter().cloned().collect();
        let inferred = reason(&mut g, &rules).unwrap();
        prop_assert!(before.iter().all(|t| g.contains(t)));
        prop_assert_eq!(g.len(), before.len() + inferred.len());
        let mut reversed = GraphStore::new();
        reversed.extend(before.into_iter().rev());
        reason(&mut reversed, &rules.into_iter().rev().collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(serialize_ntriples(&reversed), serialize_ntriples(&g));
    }

    #[test]
    fn summary_totals_are_sums(per in prop::collection::vec((0usize..10, 0usize..10, 0usize..10), 0..8)) {
        let reports: Vec<GroundingReport> = per
            .iter()
            .enumerate()
            .map(|(i, (g, r, h))| {
                let totals = kgf_core::grounding::GroundingTotals { triples: g + r + h, grounded: *g, rescued: *r, hallucinated: *h };
                GroundingReport::from_totals(format!("p{i}"), totals, BTreeMap::new())
            })
            .collect();
        let m = summarize_eav(&reports, &[], &[], 0, &[], &PredicateNormalizer::default());
        prop_assert_eq!(m.eav.patients, per.len());
        prop_assert_eq!(m.eav.grounded, per.iter().map(|x| x.0).sum::<usize>());
        prop_assert_eq!(m.eav.rescued, per.iter().map(|x| x.1).sum::<usize>());
        prop_assert_eq!(m.eav.hallucinated, per.iter().map(|x| x.2).sum::<usize>());
        prop_assert_eq!(m.eav.total_triples, per.iter().map(|x| x.0 + x.1 + x.2).sum::<usize>());
    }
}

#[test]
fn statuses_follow_stage() {
    let report = ClinicalReport::from_text("p", Cohort::Pdac, "Patient is a 64 year old male. Started gemcitabine.");
    let g = Grounder::default();
    let (r, _) = g.ground(
        &[
            EavTriple::new("a", "p", "MedicationStatement", "drug", "gemcitabine"),
            EavTriple::new("b", "p", "Patient", "gender", "Male"),
        ],
        &report,
    );
    assert_eq!(r[0].status, MatchStatus::Grounded);
    assert_eq!(r[1].status, MatchStatus::Rescued);
}

#[test]
fn provider_is_object_safe() {
    let p: Arc<dyn CompletionProvider> = Arc::new(OfflineAgent::default());
    assert_eq!(p.id(), "offline");
}
