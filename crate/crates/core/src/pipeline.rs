//! The staged run: extract → ground → map → relate → encode → validate → report.
//!
//! Per-document stages run in parallel and write `<out>/<stage>/<pid>.json`
//! (or `.nt`) next to a `<pid>.key` digest of their inputs. A rerun whose
//! digest matches reuses the stored artifact. Cohort-level stages always
//! recompute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    AgentRole, CompletionProvider, EmbeddingProvider, HttpProvider, HttpProviderConfig, InflightLimit, MockProvider,
    NgramHashEmbedder, OfflineAgent, RetryPolicy, Throttled,
};
use crate::config::Config;
use crate::corpus::{load_corpus, ClinicalReport, Cohort};
use crate::error::{Error, Result};
use crate::extraction::{extract_eav, flag_uncertain, EavTriple, ExtractionOptions};
use crate::graph::{
    encode_eav, entity_iri, parse_ntriples, parse_rules, reason, serialize_ntriples, serialize_turtle,
    validate_domain_range, EncodeOptions, GraphStore, Inconsistency, Iri, Node, RdfTriple, SwrlRule, FHIR, KG,
};
use crate::grounding::{Grounder, GroundingReport, GroundingTables, MatchResult, MatchStatus};
use crate::metrics::{compare_models, emit_report, summarize_eav, summarize_graph, ReportFormat, RunReport};
use crate::ontology::{build_schema, load_tbox, load_vocab, map_concept, ConceptMapping, PredicateUse, SchemaDecl, UriPolicy, VocabIndex};
use crate::relations::{
    adversarial_check, composite_trust, consensus_accept, contradiction_rate, evidence_alignment, generate_candidates,
    judge, known_endpoints, perturb, redundancy_pairs, relation_context, self_consistency, semantic_gaps,
    PredicateNormalizer, QuarantineReason, QuarantineRecord, RedundancyCluster, RelationTriple,
};
use crate::text::{pascal_case, slug};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Ground,
    Map,
    Relate,
    Encode,
    Validate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Extract,
        Stage::Ground,
        Stage::Map,
        Stage::Relate,
        Stage::Encode,
        Stage::Validate,
        Stage::Report,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Ground => "ground",
            Stage::Map => "map",
            Stage::Relate => "relate",
            Stage::Encode => "encode",
            Stage::Validate => "validate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExtraction {
    pub triples: Vec<EavTriple>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractArtifact {
    pub patient_id: String,
    pub cohort: Cohort,
    /// The model whose triples feed later stages.
    pub primary: String,
    pub models: BTreeMap<String, ModelExtraction>,
    /// Ids of primary triples whose value entropy exceeds δ_H.
    pub flagged: Vec<String>,
    /// Ids of primary triples without token probabilities.
    pub unknown_entropy: Vec<String>,
}

impl ExtractArtifact {
    fn primary_triples(&self) -> &[EavTriple] {
        &self.models[&self.primary].triples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundArtifact {
    pub patient_id: String,
    pub results: Vec<MatchResult>,
    pub report: GroundingReport,
    pub per_model: BTreeMap<String, GroundingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapArtifact {
    pub patient_id: String,
    pub mappings: Vec<ConceptMapping>,
    pub unmapped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelateArtifact {
    pub patient_id: String,
    /// Accepted, trusted and non-redundant relations with all scores.
    pub relations: Vec<RelationTriple>,
    pub clusters: Vec<RedundancyCluster>,
    pub gaps: Vec<Vec<String>>,
    pub quarantine: Vec<QuarantineRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub inconsistencies: Vec<Inconsistency>,
    pub inferred: usize,
    pub asserted: usize,
}

/// What a run did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub stages: Vec<Stage>,
    pub documents: usize,
    pub cache_hits: usize,
    pub outputs: Vec<PathBuf>,
}

struct Models {
    /// Extraction and relation models, in role order extractor, refiner, adversary.
    generators: Vec<(String, AgentRole, Arc<dyn CompletionProvider>)>,
    judge: Arc<dyn CompletionProvider>,
    adversary: Arc<dyn CompletionProvider>,
}

fn build_models(cfg: &Config) -> Result<Models> {
    let limit = Arc::new(InflightLimit::new(cfg.max_inflight));
    let make = |id: &str| -> Result<Arc<dyn CompletionProvider>> {
        let inner: Arc<dyn CompletionProvider> = if cfg.offline {
            Arc::new(MockProvider::new(id, cfg.fixtures.clone()).with_fallback(Arc::new(OfflineAgent::new(id))))
        } else if let Some(endpoint) = &cfg.endpoint {
            let http = Arc::new(HttpProvider::new(HttpProviderConfig {
                id: id.to_string(),
                endpoint: endpoint.clone(),
                model: id.to_string(),
                timeout: cfg.timeout(),
            })?);
            Arc::new(MockProvider::new(id, cfg.fixtures.clone()).with_fallback(http))
        } else {
            Arc::new(MockProvider::new(id, cfg.fixtures.clone()))
        };
        Ok(Arc::new(Throttled::new(inner, limit.clone())))
    };
    Ok(Models {
        generators: vec![
            (cfg.extractor_model.clone(), AgentRole::Extractor, make(&cfg.extractor_model)?),
            (cfg.refiner_model.clone(), AgentRole::Refiner, make(&cfg.refiner_model)?),
            (cfg.adversary_model.clone(), AgentRole::Adversary, make(&cfg.adversary_model)?),
        ],
        judge: make(&cfg.judge_model)?,
        adversary: make(&cfg.adversary_model)?,
    })
}

pub struct Pipeline {
    cfg: Config,
    fingerprint: String,
    reports: Vec<ClinicalReport>,
    models: Models,
    retry: RetryPolicy,
    embedder: Arc<dyn EmbeddingProvider>,
    grounder: Grounder,
    vocab_bytes: Vec<u8>,
    tbox: Vec<SchemaDecl>,
    rules: Vec<SwrlRule>,
    normalizer: PredicateNormalizer,
    fresh: bool,
    hits: AtomicUsize,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Pipeline {
    /// Validates the config and loads every input. Config problems surface
    /// here, before any stage runs.
    pub fn new(cfg: Config) -> Result<Pipeline> {
        cfg.validate()?;
        let corpus_dir = cfg.corpus.clone().expect("validated");
        let load = load_corpus(&corpus_dir, None)?;
        for issue in &load.issues {
            log::warn!("{}: {}", issue.path.display(), issue.message);
        }
        let mut reports = load.reports;
        if let Some(c) = &cfg.cohort {
            let c: Cohort = c.parse()?;
            reports.retain(|r| r.cohort == c);
        }
        if reports.is_empty() {
            log::warn!("no reports found under {}", corpus_dir.display());
        }

        let mut tables = GroundingTables::default();
        if let Some(p) = &cfg.synonyms {
            tables.load_synonyms(p)?;
        }
        if let Some(p) = &cfg.lemma_rules {
            tables.load_lemma_rules(p)?;
        }
        if let Some(p) = &cfg.explicit_fixes {
            tables.load_fixes(p)?;
        }
        if let Some(p) = &cfg.negation_cues {
            tables.load_negation_cues(p)?;
        }
        let tbox = match &cfg.tbox {
            Some(p) => load_tbox(p)?,
            None => Vec::new(),
        };
        let rules = match &cfg.rules {
            Some(p) => parse_rules(&String::from_utf8_lossy(&read(p)?))?,
            None => Vec::new(),
        };
        let vocab_bytes = read(cfg.vocab.as_ref().expect("validated"))?;

        let mut fp = cfg.clone();
        fp.out = PathBuf::new();
        let fingerprint = digest(&[&serde_json::to_vec(&fp)?]);
        Ok(Pipeline {
            models: build_models(&cfg)?,
            retry: RetryPolicy {
                max_retries: cfg.max_retries,
                ..RetryPolicy::default()
            },
            grounder: Grounder::new(cfg.grounding(), tables),
            embedder: Arc::new(NgramHashEmbedder::default()),
            normalizer: PredicateNormalizer::default(),
            fingerprint,
            reports,
            vocab_bytes,
            tbox,
            rules,
            cfg,
            fresh: false,
            hits: AtomicUsize::new(0),
        })
    }

    /// Ignore cached artifacts.
    pub fn fresh(mut self, fresh: bool) -> Self {
        self.fresh = fresh;
        self
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn reports(&self) -> &[ClinicalReport] {
        &self.reports
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.cfg.out.join(stage)
    }

    /// Loads `<out>/<stage>/<pid>.<ext>` when its key matches `inputs`,
    /// otherwise computes and stores it. Returns the artifact bytes.
    fn cached(&self, stage: Stage, pid: &str, ext: &str, inputs: &[&[u8]], compute: impl FnOnce() -> Result<Vec<u8>>) -> Result<Vec<u8>> {
        let mut parts: Vec<&[u8]> = vec![stage.as_str().as_bytes(), self.fingerprint.as_bytes()];
        parts.extend_from_slice(inputs);
        let key = digest(&parts);
        let dir = self.dir(stage.as_str());
        let art = dir.join(format!("{pid}.{ext}"));
        let key_path = dir.join(format!("{pid}.key"));
        if !self.fresh {
            if let (Ok(k), Ok(body)) = (fs::read_to_string(&key_path), fs::read(&art)) {
                if k.trim() == key {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(body);
                }
            }
        }
        let body = compute()?;
        write(&art, &body)?;
        write(&key_path, format!("{key}\n").as_bytes())?;
        Ok(body)
    }

    fn per_doc<T: Send>(&self, f: impl Fn(&ClinicalReport) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        self.reports.par_iter().map(|r| {
            f(r).map_err(|e| {
                log::error!("{}: {e}", r.patient_id);
                e
            })
        })
        .collect()
    }

    fn extract_one(&self, report: &ClinicalReport) -> Result<Vec<u8>> {
        self.cached(Stage::Extract, &report.patient_id, "json", &[report.narrative.as_bytes()], || {
            let opts = ExtractionOptions {
                entropy_mode: self.cfg.entropy_mode,
                want_token_probs: true,
            };
            let mut models = BTreeMap::new();
            for (name, _, provider) in &self.models.generators {
                let out = extract_eav(report, provider.as_ref(), &self.retry, &opts)?;
                models.insert(name.clone(), ModelExtraction {
                    triples: out.triples,
                    skipped: out.skipped,
                });
            }
            let primary = self.models.generators[0].0.clone();
            let part = flag_uncertain(models[&primary].triples.clone(), self.cfg.delta_h);
            to_json(&ExtractArtifact {
                patient_id: report.patient_id.clone(),
                cohort: report.cohort,
                primary,
                models,
                flagged: part.flagged.into_iter().map(|t| t.id).collect(),
                unknown_entropy: part.unknown.into_iter().map(|t| t.id).collect(),
            })
        })
    }

    fn ground_one(&self, report: &ClinicalReport, extract: &[u8]) -> Result<Vec<u8>> {
        self.cached(Stage::Ground, &report.patient_id, "json", &[extract, report.narrative.as_bytes()], || {
            let ex: ExtractArtifact = serde_json::from_slice(extract)?;
            let (results, summary) = self.grounder.ground(ex.primary_triples(), report);
            let per_model = ex
                .models
                .iter()
                .map(|(m, me)| (m.clone(), self.grounder.ground(&me.triples, report).1))
                .collect();
            to_json(&GroundArtifact {
                patient_id: report.patient_id.clone(),
                results,
                report: summary,
                per_model,
            })
        })
    }

    fn map_one(&self, report: &ClinicalReport, extract: &[u8], ground: &[u8], index: &VocabIndex) -> Result<Vec<u8>> {
        self.cached(Stage::Map, &report.patient_id, "json", &[extract, ground, &self.vocab_bytes], || {
            let ex: ExtractArtifact = serde_json::from_slice(extract)?;
            let gr: GroundArtifact = serde_json::from_slice(ground)?;
            let kept = supported(&ex, &gr);
            let terms: BTreeSet<&str> = kept.iter().map(|t| t.attribute.as_str()).collect();
            let mut mappings = Vec::new();
            let mut unmapped = Vec::new();
            for t in terms {
                match map_concept(t, index, self.cfg.alpha_lex, self.cfg.map_floor)? {
                    Some(m) => mappings.push(m),
                    None => unmapped.push(t.to_string()),
                }
            }
            to_json(&MapArtifact {
                patient_id: report.patient_id.clone(),
                mappings,
                unmapped,
            })
        })
    }

    fn relate_one(&self, report: &ClinicalReport, extract: &[u8], ground: &[u8], map: &[u8]) -> Result<Vec<u8>> {
        self.cached(Stage::Relate, &report.patient_id, "json", &[extract, ground, map, report.narrative.as_bytes()], || {
            let ex: ExtractArtifact = serde_json::from_slice(extract)?;
            let gr: GroundArtifact = serde_json::from_slice(ground)?;
            let mp: MapArtifact = serde_json::from_slice(map)?;
            to_json(&self.relate(report, &supported(&ex, &gr), &mp)?)
        })
    }

    fn relate(&self, report: &ClinicalReport, eavs: &[EavTriple], mp: &MapArtifact) -> Result<RelateArtifact> {
        let cfg = &self.cfg;
        let mut per_model = BTreeMap::new();
        for (name, role, provider) in &self.models.generators {
            let set = generate_candidates(report, eavs, provider.as_ref(), *role, &self.retry, 0, cfg.tau_fuzzy)?;
            per_model.insert(name.clone(), set);
        }
        let mapped: BTreeSet<String> = mp.mappings.iter().map(|m| slug(&m.raw_term)).collect();
        let mappable = |t: &RelationTriple| mapped.contains(&slug(&t.head)) || mapped.contains(&slug(&t.tail));
        let consensus = consensus_accept(&per_model, &self.normalizer, &mappable)?;

        let (primary_name, primary_role, primary) = &self.models.generators[0];
        let mut variant_sets = vec![per_model[primary_name].clone()];
        for v in 1..cfg.n_variants {
            variant_sets.push(generate_candidates(report, eavs, primary.as_ref(), *primary_role, &self.retry, v, cfg.tau_fuzzy)?);
        }
        let (entities, attributes) = known_endpoints(eavs);
        let endpoints: Vec<String> = entities.into_iter().chain(attributes).collect();
        let weights = cfg.trust_weights()?;

        let mut scored = Vec::new();
        let mut quarantine = Vec::new();
        for mut t in consensus.accepted {
            let context = relation_context(&t, report);
            t.scores.j = match judge(&t, &context, self.models.judge.as_ref(), &self.retry) {
                Ok(j) => Some(j),
                Err(e @ Error::Judgment(_)) => {
                    log::warn!("{}: {t}: {e}", report.patient_id);
                    None
                }
                Err(e) => return Err(e),
            };
            let variants = perturb(&t, &endpoints, &self.normalizer, cfg.n_perturbations);
            let pset = adversarial_check(&t, variants, &context, self.models.adversary.as_ref(), &self.retry)?;
            t.scores.xi = Some(contradiction_rate(&pset)?);
            t.scores.c = Some(self_consistency(&t, &variant_sets, &self.normalizer)?);
            t.scores.r = Some(evidence_alignment(&t, report));
            t.scores.t = Some(composite_trust(t.scores.r, t.scores.c, t.scores.j, weights)?.t);
            let reasons = QuarantineRecord::check(&t, cfg.delta_j, cfg.epsilon_xi, cfg.delta_t);
            if reasons.is_empty() {
                scored.push(t);
            } else {
                quarantine.push(QuarantineRecord { triple: t, reasons });
            }
        }
        for t in consensus.flagged {
            quarantine.push(QuarantineRecord {
                triple: t,
                reasons: vec![QuarantineReason::SingleModel],
            });
        }
        let clusters = redundancy_pairs(&scored, self.embedder.as_ref(), cfg.gamma_red, &self.normalizer)?;
        let mut keep = vec![true; scored.len()];
        for c in &clusters {
            for i in c.redundant() {
                keep[i] = false;
            }
        }
        let mut relations = Vec::new();
        for (t, k) in scored.into_iter().zip(keep) {
            if k {
                relations.push(t);
            } else {
                quarantine.push(QuarantineRecord {
                    triple: t,
                    reasons: vec![QuarantineReason::Redundant],
                });
            }
        }
        let gaps = semantic_gaps(&relations, self.embedder.as_ref(), cfg.gamma_red)?;
        quarantine.sort_by(|a, b| a.triple.to_string().cmp(&b.triple.to_string()));
        Ok(RelateArtifact {
            patient_id: report.patient_id.clone(),
            relations,
            clusters,
            gaps,
            quarantine,
        })
    }

    fn encode_one(&self, report: &ClinicalReport, inputs: [&[u8]; 4]) -> Result<Vec<u8>> {
        self.cached(Stage::Encode, &report.patient_id, "nt", &inputs, || {
            let ex: ExtractArtifact = serde_json::from_slice(inputs[0])?;
            let gr: GroundArtifact = serde_json::from_slice(inputs[1])?;
            let mp: MapArtifact = serde_json::from_slice(inputs[2])?;
            let rel: RelateArtifact = serde_json::from_slice(inputs[3])?;
            let store = self.encode_patient(&report.patient_id, &supported(&ex, &gr), &mp, &rel)?;
            Ok(serialize_ntriples(&store).into_bytes())
        })
    }

    fn encode_patient(&self, pid: &str, eavs: &[EavTriple], mp: &MapArtifact, rel: &RelateArtifact) -> Result<GraphStore> {
        let attr_map: BTreeMap<String, Iri> = mp.mappings.iter().map(|m| (m.raw_term.clone(), m.term.uri.clone())).collect();
        let opts = EncodeOptions {
            strict: self.cfg.strict_encoding,
        };
        let mut store = GraphStore::new();
        let patient = Iri::new(format!("{KG}{}", slug(pid)))?;
        store.insert(RdfTriple::new(patient.clone(), Iri::rdf_type(), Iri::new(format!("{FHIR}Patient"))?));
        let has_attribute = Iri::new(format!("{KG}hasAttribute"))?;
        let mut entity_nodes: BTreeMap<String, Iri> = BTreeMap::new();
        for e in eavs {
            store.extend(encode_eav(e, &attr_map, opts)?);
            let node = entity_iri(e)?;
            if node != patient {
                store.insert(RdfTriple::new(patient.clone(), has_attribute.clone(), node.clone()));
            }
            entity_nodes.insert(slug(&e.entity), node);
        }
        let node_for = |endpoint: &str| -> Result<Iri> {
            match entity_nodes.get(&slug(endpoint)) {
                Some(n) => Ok(n.clone()),
                None => Iri::new(format!("{KG}{}/{}", slug(pid), slug(endpoint))),
            }
        };
        for r in &rel.relations {
            let p = pascal_case(&self.normalizer.normalize(&r.predicate));
            let mut cs = p.chars();
            let Some(first) = cs.next() else { continue };
            let pred = Iri::new(format!("{KG}{}{}", first.to_lowercase(), cs.as_str()))?;
            store.insert(RdfTriple::new(node_for(&r.head)?, pred, node_for(&r.tail)?));
        }
        Ok(store)
    }

    /// Runs every stage up to and including `until`.
    pub fn run(&self, until: Stage) -> Result<RunSummary> {
        let mut summary = RunSummary {
            documents: self.reports.len(),
            ..Default::default()
        };
        let stop = |s: Stage, summary: &mut RunSummary| {
            summary.stages.push(s);
            s == until
        };

        log::info!("extract: {} documents", self.reports.len());
        let extracts = self.per_doc(|r| self.extract_one(r))?;
        if stop(Stage::Extract, &mut summary) {
            return Ok(self.finish(summary));
        }

        let grounds: Vec<Vec<u8>> = self
            .reports
            .par_iter()
            .zip(&extracts)
            .map(|(r, e)| self.ground_one(r, e))
            .collect::<Result<_>>()?;
        if stop(Stage::Ground, &mut summary) {
            return Ok(self.finish(summary));
        }

        let index = self.vocab_index()?;
        let maps: Vec<Vec<u8>> = self
            .reports
            .par_iter()
            .enumerate()
            .map(|(i, r)| self.map_one(r, &extracts[i], &grounds[i], &index))
            .collect::<Result<_>>()?;
        if stop(Stage::Map, &mut summary) {
            return Ok(self.finish(summary));
        }

        let relates: Vec<Vec<u8>> = self
            .reports
            .par_iter()
            .enumerate()
            .map(|(i, r)| self.relate_one(r, &extracts[i], &grounds[i], &maps[i]))
            .collect::<Result<_>>()?;
        if stop(Stage::Relate, &mut summary) {
            return Ok(self.finish(summary));
        }

        let encoded: Vec<Vec<u8>> = self
            .reports
            .par_iter()
            .enumerate()
            .map(|(i, r)| self.encode_one(r, [&extracts[i], &grounds[i], &maps[i], &relates[i]]))
            .collect::<Result<_>>()?;
        let mut mappings: Vec<ConceptMapping> = Vec::new();
        for m in &maps {
            let mp: MapArtifact = serde_json::from_slice(m)?;
            mappings.extend(mp.mappings);
        }
        let mut store = GraphStore::new();
        for nt in &encoded {
            store.extend(parse_ntriples(&String::from_utf8_lossy(nt))?.iter().cloned());
        }
        let schema = build_schema(&mappings, &predicate_uses(&store), &self.tbox)?;
        store.schema = schema.clone();
        summary.outputs.push(self.write_graph(&store, "cohort")?);
        let schema_path = self.dir("graph").join("schema.json");
        write(&schema_path, &to_json(&schema)?)?;
        summary.outputs.push(schema_path);
        if stop(Stage::Encode, &mut summary) {
            return Ok(self.finish(summary));
        }

        let asserted = store.len();
        let inferred = reason(&mut store, &self.rules)?;
        let mut inferred_store = GraphStore::new();
        inferred_store.extend(inferred.iter().cloned());
        let inferred_path = self.dir("validate").join("inferred.nt");
        write(&inferred_path, serialize_ntriples(&inferred_store).as_bytes())?;
        let validation = ValidationSummary {
            inconsistencies: validate_domain_range(&store, self.cfg.strict_validation)?,
            inferred: inferred.len(),
            asserted,
        };
        let vpath = self.dir("validate").join("inconsistencies.json");
        write(&vpath, &to_json(&validation)?)?;
        summary.outputs.extend([inferred_path, vpath, self.write_graph(&store, "cohort")?]);
        if stop(Stage::Validate, &mut summary) {
            return Ok(self.finish(summary));
        }

        let report = self.build_report(&extracts, &grounds, &maps, &relates, &encoded, &schema, &inferred)?;
        summary.outputs.extend(emit_report(&report, ReportFormat::Structured, &self.dir("report"))?);
        summary.outputs.extend(emit_report(&report, ReportFormat::Tabular, &self.dir("report"))?);
        summary.outputs.sort();
        summary.outputs.dedup();
        stop(Stage::Report, &mut summary);
        Ok(self.finish(summary))
    }

    fn finish(&self, mut summary: RunSummary) -> RunSummary {
        summary.cache_hits = self.hits.swap(0, Ordering::Relaxed);
        summary
    }

    fn vocab_index(&self) -> Result<VocabIndex> {
        let load = load_vocab(self.cfg.vocab.as_ref().expect("validated"), &UriPolicy::default())?;
        VocabIndex::new(load.terms, self.embedder.clone())
    }

    fn write_graph(&self, store: &GraphStore, name: &str) -> Result<PathBuf> {
        let dir = self.dir("graph");
        let nt = dir.join(format!("{name}.nt"));
        write(&nt, serialize_ntriples(store).as_bytes())?;
        write(&dir.join(format!("{name}.ttl")), serialize_turtle(store).as_bytes())?;
        Ok(nt)
    }

    /// The cohort graph with inferred triples, as written by the validate stage.
    pub fn load_graph(&self) -> Result<GraphStore> {
        let nt = self.dir("graph").join("cohort.nt");
        let mut store = parse_ntriples(&String::from_utf8_lossy(&read(&nt)?))?;
        let schema_path = self.dir("graph").join("schema.json");
        store.schema = serde_json::from_slice(&read(&schema_path)?)?;
        Ok(store)
    }

    #[allow(clippy::too_many_arguments)]
    fn build_report(
        &self,
        extracts: &[Vec<u8>],
        grounds: &[Vec<u8>],
        maps: &[Vec<u8>],
        relates: &[Vec<u8>],
        encoded: &[Vec<u8>],
        schema: &[SchemaDecl],
        inferred: &[RdfTriple],
    ) -> Result<RunReport> {
        let mut by_cohort: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.reports.iter().enumerate() {
            by_cohort.entry(r.cohort.as_str().to_string()).or_default().push(i);
        }
        let mut report = RunReport::default();
        let mut correctness: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut model_reports: BTreeMap<String, Vec<GroundingReport>> = BTreeMap::new();
        let inferred_subjects: BTreeSet<&Iri> = inferred.iter().map(|t| &t.subject).collect();
        for (cohort, idx) in &by_cohort {
            let mut greports = Vec::new();
            let mut eavs = Vec::new();
            let mut mappings = Vec::new();
            let mut attempted = 0;
            let mut relations = Vec::new();
            let mut store = GraphStore::with_schema(schema.to_vec());
            for &i in idx {
                let ex: ExtractArtifact = serde_json::from_slice(&extracts[i])?;
                let gr: GroundArtifact = serde_json::from_slice(&grounds[i])?;
                let mp: MapArtifact = serde_json::from_slice(&maps[i])?;
                let rel: RelateArtifact = serde_json::from_slice(&relates[i])?;
                eavs.extend(ex.primary_triples().iter().cloned());
                attempted += mp.mappings.len() + mp.unmapped.len();
                mappings.extend(mp.mappings.iter().map(ConceptMapping::record));
                relations.extend(rel.relations);
                for (m, g) in &gr.per_model {
                    correctness.entry(m.clone()).or_default().insert(gr.patient_id.clone(), g.correctness_rate);
                    model_reports.entry(m.clone()).or_default().push(g.clone());
                }
                greports.push(gr.report);
                store.extend(parse_ntriples(&String::from_utf8_lossy(&encoded[i]))?.iter().cloned());
            }
            let subjects: BTreeSet<Iri> = store.iter().map(|t| t.subject.clone()).collect();
            store.extend(
                inferred
                    .iter()
                    .filter(|t| subjects.contains(&t.subject) && inferred_subjects.contains(&t.subject))
                    .cloned(),
            );
            let mut m = summarize_eav(&greports, &eavs, &mappings, attempted, &relations, &self.normalizer);
            m.structure = summarize_graph(&store, self.cfg.degree_includes_types, self.cfg.strict_validation)?;
            report.cohorts.insert(cohort.clone(), m);
        }
        report.models = compare_models(correctness)?;
        for (m, reps) in model_reports {
            let summary = summarize_eav(&reps, &[], &[], 0, &[], &self.normalizer);
            report.model_grounding.insert(m, summary.eav);
        }
        Ok(report)
    }
}

/// Primary triples that survived grounding.
fn supported(ex: &ExtractArtifact, gr: &GroundArtifact) -> Vec<EavTriple> {
    let ok: BTreeSet<&str> = gr
        .results
        .iter()
        .filter(|r| r.status != MatchStatus::Hallucinated)
        .map(|r| r.triple_ref.as_str())
        .collect();
    ex.primary_triples().iter().filter(|t| ok.contains(t.id.as_str())).cloned().collect()
}

/// Observed (predicate, subject class, object class or datatype) for every
/// typed edge except the structural `kg:hasAttribute` link.
fn predicate_uses(store: &GraphStore) -> Vec<PredicateUse> {
    let rdf_type = Iri::rdf_type();
    let has_attribute = format!("{KG}hasAttribute");
    let class_of = |s: &Iri| -> Option<Iri> {
        store.objects_of(s, &rdf_type).find_map(|n| n.as_iri().cloned())
    };
    let mut uses = Vec::new();
    for t in store.iter() {
        if t.predicate == rdf_type || t.predicate.as_str() == has_attribute {
            continue;
        }
        let Some(domain) = class_of(&t.subject) else { continue };
        let range = match &t.object {
            Node::Iri(o) => class_of(o),
            Node::Literal(l) => Iri::new(l.datatype.iri()).ok(),
        };
        if let Some(range) = range {
            uses.push(PredicateUse {
                predicate: t.predicate.clone(),
                domain,
                range,
            });
        }
    }
    uses
}
