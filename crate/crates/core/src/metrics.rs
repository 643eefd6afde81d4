//! Cohort and model metrics, and the report files built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::EavTriple;
use crate::graph::{validate_domain_range, GraphStore, Node, RDF_TYPE};
use crate::grounding::GroundingReport;
use crate::ontology::{MappingRecord, Vocabulary};
use crate::relations::{PredicateNormalizer, RelationKind, RelationTriple};
use crate::text::casefold;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EavMetrics {
    pub patients: usize,
    pub total_triples: usize,
    /// Distinct (patient, entity) pairs.
    pub entity_instances: usize,
    pub unique_attributes: usize,
    pub grounded: usize,
    pub rescued: usize,
    pub hallucinated: usize,
    /// Hallucinated triples per patient.
    pub avg_hallucinated: f64,
    /// The rates below are unweighted means over patients.
    pub coverage: f64,
    pub correctness_rate: f64,
    pub hallucination_rate: f64,
    pub rescue_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OntologyMetrics {
    pub mapped_attributes: usize,
    pub per_vocab_counts: BTreeMap<String, usize>,
    pub unmapped_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredicateMetrics {
    /// Distinct normalized predicates on entity-entity relations.
    pub entity_predicates: usize,
    /// Distinct normalized predicates on relations touching an attribute.
    pub attribute_predicates: usize,
    pub total_instances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub rdf_triples: usize,
    pub unique_predicates: usize,
    pub nodes: usize,
    pub edges: usize,
    pub avg_node_degree: f64,
    pub inconsistent_entities: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortMetrics {
    pub eav: EavMetrics,
    pub ontology: OntologyMetrics,
    pub predicates: PredicateMetrics,
    pub structure: StructureMetrics,
}

/// Triple, predicate and degree counts. Degree is 2E/V over the undirected
/// simple graph of subjects and objects; `rdf:type` edges count only when
/// `include_types` is set.
pub fn summarize_graph(store: &GraphStore, include_types: bool, strict: bool) -> Result<StructureMetrics> {
    let mut nodes: BTreeSet<Node> = BTreeSet::new();
    let mut edges: BTreeSet<(Node, Node)> = BTreeSet::new();
    let mut predicates = BTreeSet::new();
    for t in store.iter() {
        predicates.insert(&t.predicate);
        if !include_types && t.predicate.as_str() == RDF_TYPE {
            continue;
        }
        let s = Node::Iri(t.subject.clone());
        nodes.insert(s.clone());
        nodes.insert(t.object.clone());
        if s != t.object {
            let pair = if s < t.object { (s, t.object.clone()) } else { (t.object.clone(), s) };
            edges.insert(pair);
        }
    }
    let inconsistent: BTreeSet<_> = validate_domain_range(store, strict)?
        .into_iter()
        .map(|i| i.triple.subject)
        .collect();
    let avg = if nodes.is_empty() { 0.0 } else { 2.0 * edges.len() as f64 / nodes.len() as f64 };
    Ok(StructureMetrics {
        rdf_triples: store.len(),
        unique_predicates: predicates.len(),
        nodes: nodes.len(),
        edges: edges.len(),
        avg_node_degree: avg,
        inconsistent_entities: inconsistent.len(),
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// EAV, ontology and predicate metrics for a cohort. Counts are sums over
/// patients, rates are unweighted means. `attempted` is the number of
/// distinct terms sent to the mapper.
pub fn summarize_eav(
    grounding: &[GroundingReport],
    eavs: &[EavTriple],
    mappings: &[MappingRecord],
    attempted: usize,
    relations: &[RelationTriple],
    normalizer: &PredicateNormalizer,
) -> CohortMetrics {
    if grounding.is_empty() {
        log::warn!("empty cohort, metrics are zero");
    }
    let patients = grounding.len();
    let total = |f: fn(&GroundingReport) -> usize| grounding.iter().map(f).sum::<usize>();
    let hallucinated = total(|g| g.totals.hallucinated);
    let eav = EavMetrics {
        patients,
        total_triples: total(|g| g.totals.triples),
        entity_instances: eavs
            .iter()
            .map(|e| (&e.source.patient_id, casefold(&e.entity)))
            .collect::<BTreeSet<_>>()
            .len(),
        unique_attributes: eavs.iter().map(|e| casefold(&e.attribute)).collect::<BTreeSet<_>>().len(),
        grounded: total(|g| g.totals.grounded),
        rescued: total(|g| g.totals.rescued),
        hallucinated,
        avg_hallucinated: if patients == 0 { 0.0 } else { hallucinated as f64 / patients as f64 },
        coverage: mean(grounding.iter().map(|g| g.coverage)),
        correctness_rate: mean(grounding.iter().map(|g| g.correctness_rate)),
        hallucination_rate: mean(grounding.iter().map(|g| g.hallucination_rate)),
        rescue_rate: mean(grounding.iter().map(|g| g.rescue_rate)),
    };
    let mut per_vocab: BTreeMap<String, usize> = Vocabulary::ALL.iter().map(|v| (v.as_str().to_string(), 0)).collect();
    let mut mapped = BTreeSet::new();
    for m in mappings {
        if mapped.insert(casefold(&m.raw)) {
            *per_vocab.entry(m.vocab.as_str().to_string()).or_default() += 1;
        }
    }
    let ontology = OntologyMetrics {
        mapped_attributes: mapped.len(),
        per_vocab_counts: per_vocab,
        unmapped_rate: crate::ontology::unmapped_rate(attempted, attempted.saturating_sub(mapped.len())),
    };
    let preds = |ee: bool| {
        relations
            .iter()
            .filter(|r| (r.kind == RelationKind::EE) == ee)
            .map(|r| normalizer.normalize(&r.predicate))
            .collect::<BTreeSet<_>>()
            .len()
    };
    CohortMetrics {
        eav,
        ontology,
        predicates: PredicateMetrics {
            entity_predicates: preds(true),
            attribute_predicates: preds(false),
            total_instances: relations.len(),
        },
        structure: StructureMetrics::default(),
    }
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Domain("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// a minus b, per patient in sorted patient order.
    pub differences: Vec<f64>,
    /// `None` when either series is constant.
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// model → patient → correctness fraction.
    pub correctness: BTreeMap<String, BTreeMap<String, f64>>,
    pub pairs: Vec<PairComparison>,
}

/// Pairwise differences and correlations over the patients every model covers.
pub fn compare_models(correctness: BTreeMap<String, BTreeMap<String, f64>>) -> Result<ModelComparison> {
    for (m, per) in &correctness {
        if let Some((p, v)) = per.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("correctness {v} for {m}/{p} outside [0, 1]")));
        }
    }
    let models: Vec<&String> = correctness.keys().collect();
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let (a, b) = (&correctness[models[i]], &correctness[models[j]]);
            let common: Vec<&String> = a.keys().filter(|p| b.contains_key(*p)).collect();
            let xs: Vec<f64> = common.iter().map(|p| a[*p]).collect();
            let ys: Vec<f64> = common.iter().map(|p| b[*p]).collect();
            pairs.push(PairComparison {
                a: models[i].clone(),
                b: models[j].clone(),
                differences: xs.iter().zip(&ys).map(|(x, y)| x - y).collect(),
                pearson: pearson(&xs, &ys).ok(),
            });
        }
    }
    Ok(ModelComparison { correctness, pairs })
}

/// Everything the report stage writes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cohorts: BTreeMap<String, CohortMetrics>,
    pub models: ModelComparison,
    /// Per-model grounding summaries used for the radar series.
    pub model_grounding: BTreeMap<String, EavMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Tabular,
}

fn write(path: PathBuf, body: String) -> Result<PathBuf> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Writes `metrics.json` or `metrics.csv` plus `radar.csv` into `dir`.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Structured => {
            let body = serde_json::to_string_pretty(report)? + "\n";
            written.push(write(dir.join("metrics.json"), body)?);
        }
        ReportFormat::Tabular => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["cohort", "metric", "value"])?;
            for (cohort, m) in &report.cohorts {
                let mut rows = Vec::new();
                flatten("", &serde_json::to_value(m)?, &mut rows);
                for (k, v) in rows {
                    w.write_record([cohort.as_str(), &k, &v])?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
            written.push(write(dir.join("metrics.csv"), String::from_utf8_lossy(&bytes).into_owned())?);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "model", "value"])?;
    for (model, m) in &report.model_grounding {
        for (axis, v) in [
            ("coverage", m.coverage),
            ("correctness", m.correctness_rate),
            ("non_hallucination", 1.0 - m.hallucination_rate),
            ("rescue", m.rescue_rate),
        ] {
            w.write_record([axis, model.as_str(), &v.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    written.push(write(dir.join("radar.csv"), String::from_utf8_lossy(&bytes).into_owned())?);
    Ok(written)
}
