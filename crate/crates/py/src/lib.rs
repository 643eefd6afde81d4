//! Python bindings for `kgf_core`.
//!
//! Structured results (match results, mappings, relation triples) cross the
//! boundary as plain dicts built from their serde form.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use kgf_core::agents::{NgramHashEmbedder, OfflineAgent, RetryPolicy};
use kgf_core::config::Config;
use kgf_core::corpus::Cohort;
use kgf_core::extraction::{self, ExtractionOptions};
use kgf_core::graph::{self, GraphStore, Node};
use kgf_core::grounding::{self, GroundingConfig, GroundingTables};
use kgf_core::ontology::{self, UriPolicy};
use kgf_core::pipeline::{Pipeline, Stage};
use kgf_core::relations::{self, RelationTriple, TrustWeights};
use kgf_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::EmptyInput(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A clinical report segmented into sentences.
#[pyclass(module = "kgf", frozen)]
struct ClinicalReport(kgf_core::corpus::ClinicalReport);

#[pymethods]
impl ClinicalReport {
    #[new]
    #[pyo3(signature = (patient_id, narrative, cohort = "OTHER"))]
    fn new(patient_id: &str, narrative: &str, cohort: &str) -> PyResult<Self> {
        let cohort: Cohort = cohort.parse().map_err(err)?;
        Ok(ClinicalReport(kgf_core::corpus::ClinicalReport::from_text(patient_id, cohort, narrative)))
    }

    #[getter]
    fn patient_id(&self) -> &str {
        &self.0.patient_id
    }

    #[getter]
    fn cohort(&self) -> String {
        self.0.cohort.to_string()
    }

    #[getter]
    fn narrative(&self) -> &str {
        &self.0.narrative
    }

    fn sentences(&self) -> Vec<String> {
        self.0.sentences.iter().map(|s| s.text.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!("ClinicalReport({:?}, {})", self.0.patient_id, self.0.cohort)
    }
}

/// An entity-attribute-value triple.
#[pyclass(module = "kgf", frozen, from_py_object)]
#[derive(Clone)]
struct EavTriple(extraction::EavTriple);

#[pymethods]
impl EavTriple {
    #[new]
    #[pyo3(signature = (id, patient_id, entity, attribute, value, token_probs = None))]
    fn new(
        id: &str,
        patient_id: &str,
        entity: &str,
        attribute: &str,
        value: &str,
        token_probs: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mut t = extraction::EavTriple::new(id, patient_id, entity, attribute, value);
        if let Some(p) = token_probs {
            t = t.with_token_probs(p, Default::default()).map_err(err)?;
        }
        Ok(EavTriple(t))
    }

    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }

    #[getter]
    fn entity(&self) -> &str {
        &self.0.entity
    }

    #[getter]
    fn fhir_type(&self) -> &'static str {
        self.0.fhir_type.as_str()
    }

    #[getter]
    fn attribute(&self) -> &str {
        &self.0.attribute
    }

    #[getter]
    fn value(&self) -> &str {
        &self.0.value
    }

    #[getter]
    fn entropy(&self) -> Option<f64> {
        self.0.entropy
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("EavTriple({:?}, {:?}, {:?})", self.0.entity, self.0.attribute, self.0.value)
    }
}

/// Vocabulary terms ready for concept mapping.
#[pyclass(module = "kgf", frozen)]
struct VocabIndex {
    inner: ontology::VocabIndex,
    diagnostics: Vec<String>,
}

#[pymethods]
impl VocabIndex {
    /// Builds an index from TSV rows `vocabulary<TAB>code<TAB>label[<TAB>syn|syn]`.
    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        let load = ontology::parse_vocab(text, &UriPolicy::default());
        let inner = ontology::VocabIndex::new(load.terms, Arc::new(NgramHashEmbedder::default())).map_err(err)?;
        Ok(VocabIndex {
            inner,
            diagnostics: load.diagnostics,
        })
    }

    #[getter]
    fn diagnostics(&self) -> Vec<String> {
        self.diagnostics.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Best mapping for `raw` as a dict, or None below the floor.
    #[pyo3(signature = (raw, alpha = 0.6, floor = 0.55))]
    fn map(&self, py: Python<'_>, raw: &str, alpha: f64, floor: f64) -> PyResult<Option<Py<PyAny>>> {
        match ontology::map_concept(raw, &self.inner, alpha, floor).map_err(err)? {
            Some(m) => Ok(Some(to_py(py, &m)?)),
            None => Ok(None),
        }
    }
}

/// An RDF graph.
#[pyclass(module = "kgf")]
struct Graph(GraphStore);

fn cell(n: &Node) -> String {
    match n {
        Node::Iri(i) => i.to_string(),
        Node::Literal(l) => l.lexical.clone(),
    }
}

#[pymethods]
impl Graph {
    #[new]
    fn new() -> Self {
        Graph(GraphStore::new())
    }

    #[staticmethod]
    fn from_ntriples(text: &str) -> PyResult<Self> {
        graph::parse_ntriples(text).map(Graph).map_err(err)
    }

    fn to_ntriples(&self) -> String {
        graph::serialize_ntriples(&self.0)
    }

    fn to_turtle(&self) -> String {
        graph::serialize_turtle(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Runs a SELECT query; returns `(vars, rows)` with IRIs and literal lexical forms as strings.
    fn query(&self, sparql: &str) -> PyResult<(Vec<String>, Vec<Vec<String>>)> {
        let q = graph::parse_sparql(sparql).map_err(err)?;
        let result = graph::eval_sparql(&q, &self.0);
        let rows = result.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
        Ok((result.vars, rows))
    }

    /// Applies SWRL rules to a fixpoint; returns the inferred triples as N-Triples lines.
    fn reason(&mut self, rules: &str) -> PyResult<Vec<String>> {
        let rules = graph::parse_rules(rules).map_err(err)?;
        let inferred = graph::reason(&mut self.0, &rules).map_err(err)?;
        Ok(inferred.iter().map(graph::ntriples_line).collect())
    }
}

/// Natural-log entropy of a value's token probabilities.
#[pyfunction]
fn value_entropy(probs: Vec<f64>) -> PyResult<f64> {
    extraction::value_entropy(&probs).map_err(err)
}

/// Indel similarity on the 0..100 scale.
#[pyfunction]
fn fuzzy_ratio(a: &str, b: &str) -> f64 {
    grounding::fuzzy_ratio(a, b)
}

/// Extracts triples with the deterministic offline agent.
#[pyfunction]
fn extract_offline(report: &ClinicalReport) -> PyResult<Vec<EavTriple>> {
    let agent = OfflineAgent::default();
    let out = extraction::extract_eav(&report.0, &agent, &RetryPolicy::default(), &ExtractionOptions::default())
        .map_err(err)?;
    Ok(out.triples.into_iter().map(EavTriple).collect())
}

/// Grounds triples against a report; returns `(results, report)` as dicts.
#[pyfunction]
#[pyo3(signature = (triples, report, tau_fuzzy = 90.0))]
fn ground(py: Python<'_>, triples: Vec<EavTriple>, report: &ClinicalReport, tau_fuzzy: f64) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let cfg = GroundingConfig {
        tau_fuzzy,
        ..Default::default()
    };
    let triples: Vec<_> = triples.into_iter().map(|t| t.0).collect();
    let (results, summary) = grounding::ground_triples(&triples, &report.0, &cfg, &GroundingTables::default());
    Ok((to_py(py, &results)?, to_py(py, &summary)?))
}

/// T = w_r·R + w_c·C + w_j·J; missing components are renormalized away.
#[pyfunction]
#[pyo3(signature = (r = None, c = None, j = None, weights = (0.4, 0.3, 0.3)))]
fn composite_trust(r: Option<f64>, c: Option<f64>, j: Option<f64>, weights: (f64, f64, f64)) -> PyResult<f64> {
    let w = TrustWeights::new(weights.0, weights.1, weights.2).map_err(err)?;
    Ok(relations::composite_trust(r, c, j, w).map_err(err)?.t)
}

/// Keeps relation dicts with J > delta_j and xi <= epsilon.
#[pyfunction]
#[pyo3(signature = (triples, delta_j = 0.7, epsilon = 0.2))]
fn filter_trusted(py: Python<'_>, triples: &Bound<'_, PyAny>, delta_j: f64, epsilon: f64) -> PyResult<Py<PyAny>> {
    let triples: Vec<RelationTriple> = from_py(py, triples)?;
    to_py(py, &relations::filter_trusted(&triples, delta_j, epsilon))
}

/// Runs the pipeline up to `until`; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config, until = "report", offline = true, out = None, fresh = false))]
fn run_pipeline(
    py: Python<'_>,
    config: PathBuf,
    until: &str,
    offline: bool,
    out: Option<PathBuf>,
    fresh: bool,
) -> PyResult<Py<PyAny>> {
    let stage: Stage = until.parse().map_err(err)?;
    let mut cfg = Config::load(&config).map_err(err)?;
    cfg.offline = cfg.offline || offline;
    if let Some(out) = out {
        cfg.out = out;
    }
    let summary = py
        .detach(|| Pipeline::new(cfg).and_then(|p| p.fresh(fresh).run(stage)))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("stages", summary.stages.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
    d.set_item("documents", summary.documents)?;
    d.set_item("cache_hits", summary.cache_hits)?;
    d.set_item("outputs", summary.outputs)?;
    Ok(d.into_any().unbind())
}

#[pymodule]
fn kgf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ClinicalReport>()?;
    m.add_class::<EavTriple>()?;
    m.add_class::<VocabIndex>()?;
    m.add_class::<Graph>()?;
    m.add_function(wrap_pyfunction!(value_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(fuzzy_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(extract_offline, m)?)?;
    m.add_function(wrap_pyfunction!(ground, m)?)?;
    m.add_function(wrap_pyfunction!(composite_trust, m)?)?;
    m.add_function(wrap_pyfunction!(filter_trusted, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
