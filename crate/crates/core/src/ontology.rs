//! Vocabulary mapping and schema declarations.
//!
//! Raw attribute and value terms are scored against local vocabulary snapshots
//! with a blend of lexical and embedding similarity. Mapped terms receive
//! persistent URIs, and the schema combines inferred property typing with a
//! hand-authored TBox file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{cosine, embed, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::graph::{Iri, OWL, RDF, RDFS, SNOMED, XSD};
use crate::grounding::fuzzy_ratio;
use crate::text::casefold;

/// Supported vocabularies, in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vocabulary {
    #[serde(rename = "SNOMED")]
    Snomed,
    #[serde(rename = "LOINC")]
    Loinc,
    #[serde(rename = "RXNORM")]
    RxNorm,
    #[serde(rename = "ICD")]
    Icd,
    #[serde(rename = "GO")]
    Go,
}

impl Vocabulary {
    pub const ALL: [Vocabulary; 5] = [
        Vocabulary::Snomed,
        Vocabulary::Loinc,
        Vocabulary::RxNorm,
        Vocabulary::Icd,
        Vocabulary::Go,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Vocabulary::Snomed => "SNOMED",
            Vocabulary::Loinc => "LOINC",
            Vocabulary::RxNorm => "RXNORM",
            Vocabulary::Icd => "ICD",
            Vocabulary::Go => "GO",
        }
    }

    /// Whether mapped terms of this vocabulary are declared as classes.
    pub fn declares_classes(&self) -> bool {
        matches!(self, Vocabulary::Snomed | Vocabulary::Go | Vocabulary::Icd)
    }
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Vocabulary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Vocabulary::ALL
            .into_iter()
            .find(|v| v.as_str() == up || (up == "SNOMEDCT" && *v == Vocabulary::Snomed))
            .ok_or_else(|| Error::Config(format!("unknown vocabulary {s:?}")))
    }
}

/// How vocabulary codes become URIs. SNOMED codes always use the official
/// `http://snomed.info/id/` namespace; others go under `base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UriPolicy {
    pub base: String,
}

impl Default for UriPolicy {
    fn default() -> Self {
        UriPolicy {
            base: "http://example.org/vocab/".to_string(),
        }
    }
}

impl UriPolicy {
    pub fn mint(&self, vocab: Vocabulary, code: &str) -> Result<Iri> {
        let code = encode_segment(code);
        match vocab {
            Vocabulary::Snomed => Iri::new(format!("{SNOMED}{code}")),
            v => Iri::new(format!("{}{}/{}", self.base, v.as_str().to_ascii_lowercase(), code)),
        }
    }
}

/// Percent-encodes everything outside the unreserved set, keeping minting injective.
fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyTerm {
    pub vocabulary: Vocabulary,
    pub code: String,
    pub label: String,
    pub synonyms: Vec<String>,
    pub uri: Iri,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VocabLoad {
    pub terms: Vec<OntologyTerm>,
    /// Skipped rows and overridden duplicates, one message each.
    pub diagnostics: Vec<String>,
}

/// Reads a vocabulary TSV: `vocabulary<TAB>code<TAB>label[<TAB>syn1|syn2...]`.
pub fn load_vocab(path: &Path, policy: &UriPolicy) -> Result<VocabLoad> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let load = parse_vocab(&body, policy);
    for d in &load.diagnostics {
        log::warn!("{}: {d}", path.display());
    }
    Ok(load)
}

pub fn parse_vocab(body: &str, policy: &UriPolicy) -> VocabLoad {
    let mut by_key: BTreeMap<(Vocabulary, String), OntologyTerm> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (n, line) in body.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 3 || cols.len() > 4 || cols[1].is_empty() || cols[2].is_empty() {
            diagnostics.push(format!("line {}: expected 3 or 4 tab-separated columns", n + 1));
            continue;
        }
        let vocab = match cols[0].parse::<Vocabulary>() {
            Ok(v) => v,
            Err(_) => {
                diagnostics.push(format!("line {}: unknown vocabulary {:?}", n + 1, cols[0]));
                continue;
            }
        };
        let uri = match policy.mint(vocab, cols[1]) {
            Ok(u) => u,
            Err(e) => {
                diagnostics.push(format!("line {}: {e}", n + 1));
                continue;
            }
        };
        let synonyms = cols
            .get(3)
            .map(|s| s.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        let term = OntologyTerm {
            vocabulary: vocab,
            code: cols[1].to_string(),
            label: cols[2].to_string(),
            synonyms,
            uri,
        };
        if by_key.insert((vocab, term.code.clone()), term).is_some() {
            diagnostics.push(format!("line {}: duplicate {vocab} code {}, later row wins", n + 1, cols[1]));
        }
    }
    VocabLoad {
        terms: by_key.into_values().collect(),
        diagnostics,
    }
}

/// Case-insensitive fuzzy ratio rescaled to `[0, 1]`.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    fuzzy_ratio(&casefold(a.trim()), &casefold(b.trim())) / 100.0
}

/// Best lexical similarity of `raw` against a term's label and synonyms.
pub fn term_lexical_similarity(raw: &str, term: &OntologyTerm) -> f64 {
    std::iter::once(&term.label)
        .chain(&term.synonyms)
        .map(|s| lexical_similarity(raw, s))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMapping {
    pub raw_term: String,
    pub term: OntologyTerm,
    pub sim_lex: f64,
    pub sim_sem: f64,
    pub alpha: f64,
    pub score: f64,
}

impl ConceptMapping {
    pub fn record(&self) -> MappingRecord {
        MappingRecord {
            raw: self.raw_term.clone(),
            vocab: self.term.vocabulary,
            code: self.term.code.clone(),
            score: self.score,
        }
    }
}

/// Persisted form of a mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub raw: String,
    pub vocab: Vocabulary,
    pub code: String,
    pub score: f64,
}

/// Vocabulary terms with precomputed label embeddings, in priority order.
pub struct VocabIndex {
    terms: Vec<OntologyTerm>,
    label_vecs: Vec<EmbeddingVector>,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl fmt::Debug for VocabIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VocabIndex")
            .field("terms", &self.terms.len())
            .field("embedder", &self.embedder.id())
            .finish()
    }
}

impl VocabIndex {
    pub fn new(mut terms: Vec<OntologyTerm>, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyInput("vocabulary set is empty".into()));
        }
        terms.sort_by(|a, b| (a.vocabulary, &a.code).cmp(&(b.vocabulary, &b.code)));
        terms.dedup_by(|a, b| a.vocabulary == b.vocabulary && a.code == b.code);
        let label_vecs = terms
            .iter()
            .map(|t| embed(&t.label, embedder.as_ref()))
            .collect::<Result<_>>()?;
        Ok(VocabIndex {
            terms,
            label_vecs,
            embedder,
        })
    }

    pub fn terms(&self) -> &[OntologyTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, vocab: Vocabulary, code: &str) -> Option<&OntologyTerm> {
        self.terms.iter().find(|t| t.vocabulary == vocab && t.code == code)
    }
}

/// Maps a raw term to its best-scoring vocabulary entry, or `None` when the
/// best score falls below `floor`.
pub fn map_concept(raw: &str, index: &VocabIndex, alpha: f64, floor: f64) -> Result<Option<ConceptMapping>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    let cleaned = raw.replace('_', " ");
    if cleaned.trim().is_empty() {
        return Ok(None);
    }
    let raw_vec = embed(&cleaned, index.embedder.as_ref())?;
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (i, term) in index.terms.iter().enumerate() {
        let sim_lex = term_lexical_similarity(&cleaned, term);
        let sim_sem = cosine(&raw_vec, &index.label_vecs[i]).clamp(0.0, 1.0);
        let score = alpha * sim_lex + (1.0 - alpha) * sim_sem;
        // terms are in priority order, so only a strictly better score replaces
        if best.is_none_or(|b| score > b.3) {
            best = Some((i, sim_lex, sim_sem, score));
        }
    }
    Ok(best.filter(|b| b.3 >= floor).map(|(i, sim_lex, sim_sem, score)| ConceptMapping {
        raw_term: raw.to_string(),
        term: index.terms[i].clone(),
        sim_lex,
        sim_sem,
        alpha,
        score,
    }))
}

/// `unmapped / attempted`, or 0 when nothing was attempted.
pub fn unmapped_rate(attempted: usize, unmapped: usize) -> f64 {
    if attempted == 0 {
        0.0
    } else {
        unmapped as f64 / attempted as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SchemaDecl {
    ClassDecl { class: Iri },
    ObjectProperty { property: Iri },
    SubClassOf { sub: Iri, sup: Iri },
    DomainRange { property: Iri, domain: Iri, range: Iri },
    /// Read as subclass in both directions.
    EquivalentClass { a: Iri, b: Iri },
    /// `class ⊓ ∃property.filler ⊑ sup`.
    Restriction { class: Iri, property: Iri, filler: Iri, sup: Iri },
}

/// One observed use of a predicate between typed endpoints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateUse {
    pub predicate: Iri,
    pub domain: Iri,
    pub range: Iri,
}

/// Parses a TBox file. One axiom per line:
///
/// ```text
/// @prefix kg: <http://example.org/kg#>
/// Class kg:Biomarker
/// ObjectProperty kg:hasMarker
/// SubClassOf kg:ElevatedCA19_9 kg:AbnormalTumorMarker
/// EquivalentClass kg:Tumour kg:Tumor
/// DomainRange kg:hasMarker fhir:Observation kg:Biomarker
/// Restriction kg:Biopsy kg:hasOutcome kg:Malignant kg:PositiveFinding
/// ```
///
/// Terms are `<absolute-iri>` or `prefix:local`; `rdf`, `rdfs`, `owl`, `xsd`,
/// `fhir`, `kg` and `snomed` are predeclared.
pub fn parse_tbox(body: &str) -> Result<Vec<SchemaDecl>> {
    let mut prefixes = default_prefixes();
    let mut out = Vec::new();
    for (n, raw) in body.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split(" #").next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            what: "tbox",
            line: line_no,
            message,
        };
        let words: Vec<&str> = line.trim_end_matches('.').split_whitespace().collect();
        if words[0] == "@prefix" || words[0].eq_ignore_ascii_case("PREFIX") {
            let (Some(name), Some(iri)) = (words.get(1), words.get(2)) else {
                return Err(err("prefix needs a name and an IRI".into()));
            };
            let name = name.strip_suffix(':').ok_or_else(|| err(format!("prefix name {name:?} must end with ':'")))?;
            let iri = iri
                .strip_prefix('<')
                .and_then(|s| s.strip_suffix('>'))
                .ok_or_else(|| err("prefix IRI must be in angle brackets".into()))?;
            prefixes.insert(name.to_string(), iri.to_string());
            continue;
        }
        let args: Vec<Iri> = words[1..]
            .iter()
            .map(|w| expand_term(w, &prefixes).map_err(|m| err(m)))
            .collect::<Result<_>>()?;
        let arity = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(err(format!("{} takes {k} terms, found {}", words[0], args.len())))
            }
        };
        let decl = match words[0] {
            "Class" => {
                arity(1)?;
                SchemaDecl::ClassDecl { class: args[0].clone() }
            }
            "ObjectProperty" => {
                arity(1)?;
                SchemaDecl::ObjectProperty {
                    property: args[0].clone(),
                }
            }
            "SubClassOf" => {
                arity(2)?;
                SchemaDecl::SubClassOf {
                    sub: args[0].clone(),
                    sup: args[1].clone(),
                }
            }
            "EquivalentClass" => {
                arity(2)?;
                SchemaDecl::EquivalentClass {
                    a: args[0].clone(),
                    b: args[1].clone(),
                }
            }
            "DomainRange" => {
                arity(3)?;
                SchemaDecl::DomainRange {
                    property: args[0].clone(),
                    domain: args[1].clone(),
                    range: args[2].clone(),
                }
            }
            "Restriction" => {
                arity(4)?;
                SchemaDecl::Restriction {
                    class: args[0].clone(),
                    property: args[1].clone(),
                    filler: args[2].clone(),
                    sup: args[3].clone(),
                }
            }
            other => return Err(err(format!("unknown axiom kind {other:?}"))),
        };
        out.push(decl);
    }
    Ok(out)
}

pub fn load_tbox(path: &Path) -> Result<Vec<SchemaDecl>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tbox(&body)
}

pub(crate) fn default_prefixes() -> BTreeMap<String, String> {
    [
        ("rdf", RDF),
        ("rdfs", RDFS),
        ("owl", OWL),
        ("xsd", XSD),
        ("fhir", crate::graph::FHIR),
        ("kg", crate::graph::KG),
        ("snomed", SNOMED),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Expands `<iri>` or `prefix:local` into an IRI.
pub(crate) fn expand_term(word: &str, prefixes: &BTreeMap<String, String>) -> std::result::Result<Iri, String> {
    if let Some(inner) = word.strip_prefix('<').and_then(|w| w.strip_suffix('>')) {
        return Iri::new(inner).map_err(|e| e.to_string());
    }
    let (p, local) = word.split_once(':').ok_or_else(|| format!("expected <iri> or prefix:name, found {word:?}"))?;
    let base = prefixes.get(p).ok_or_else(|| format!("undeclared prefix {p:?}"))?;
    Iri::new(format!("{base}{local}")).map_err(|e| e.to_string())
}

/// Assembles the schema: class declarations for mapped SNOMED, GO and ICD
/// terms, object properties typed by their most frequent observed endpoint
/// pair, and the hand-authored axioms. Output is sorted and deduplicated.
pub fn build_schema(mappings: &[ConceptMapping], uses: &[PredicateUse], tbox: &[SchemaDecl]) -> Result<Vec<SchemaDecl>> {
    let mut decls: BTreeSet<SchemaDecl> = BTreeSet::new();
    for m in mappings {
        if m.term.vocabulary.declares_classes() {
            decls.insert(SchemaDecl::ClassDecl { class: m.term.uri.clone() });
        }
    }

    let mut counts: BTreeMap<&Iri, BTreeMap<(&Iri, &Iri), usize>> = BTreeMap::new();
    for u in uses {
        *counts.entry(&u.predicate).or_default().entry((&u.domain, &u.range)).or_default() += 1;
    }
    let has_declared_range: BTreeSet<&Iri> = tbox
        .iter()
        .filter_map(|d| match d {
            SchemaDecl::DomainRange { property, .. } => Some(property),
            _ => None,
        })
        .collect();
    for (pred, pairs) in &counts {
        decls.insert(SchemaDecl::ObjectProperty {
            property: (*pred).clone(),
        });
        if has_declared_range.contains(pred) {
            continue;
        }
        // BTreeMap iteration gives the lexicographically first pair among ties
        let mut modal: Option<((&Iri, &Iri), usize)> = None;
        for (pair, &c) in pairs {
            if modal.is_none_or(|m| c > m.1) {
                modal = Some((*pair, c));
            }
        }
        if let Some(((d, r), _)) = modal {
            decls.insert(SchemaDecl::DomainRange {
                property: (*pred).clone(),
                domain: d.clone(),
                range: r.clone(),
            });
        }
    }

    for d in tbox {
        if let SchemaDecl::DomainRange { property, .. } = d {
            decls.insert(SchemaDecl::ObjectProperty {
                property: property.clone(),
            });
        }
        decls.insert(d.clone());
    }
    let decls: Vec<SchemaDecl> = decls.into_iter().collect();
    check_acyclic(&decls)?;
    Ok(decls)
}

/// Fails with the offending path if the `SubClassOf` axioms contain a cycle.
pub fn check_acyclic(decls: &[SchemaDecl]) -> Result<()> {
    let mut edges: BTreeMap<&Iri, Vec<&Iri>> = BTreeMap::new();
    for d in decls {
        if let SchemaDecl::SubClassOf { sub, sup } = d {
            edges.entry(sub).or_default().push(sup);
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<&Iri, Mark> = BTreeMap::new();
    for &start in edges.keys() {
        if marks.contains_key(start) {
            continue;
        }
        // iterative DFS keeping the current path
        let mut path: Vec<(&Iri, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Open);
        while let Some((node, next)) = path.last_mut() {
            let succ = edges.get(*node).map(Vec::as_slice).unwrap_or(&[]);
            if *next < succ.len() {
                let s = succ[*next];
                *next += 1;
                match marks.get(s) {
                    Some(Mark::Open) => {
                        let from = path.iter().position(|(n, _)| *n == s).unwrap_or(0);
                        let mut cycle: Vec<String> = path[from..].iter().map(|(n, _)| n.to_string()).collect();
                        cycle.push(s.to_string());
                        return Err(Error::Cycle(cycle));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(s, Mark::Open);
                        path.push((s, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                path.pop();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::NgramHashEmbedder;

    fn index(body: &str) -> VocabIndex {
        let load = parse_vocab(body, &UriPolicy::default());
        VocabIndex::new(load.terms, Arc::new(NgramHashEmbedder::default())).unwrap()
    }

    const FIXTURE: &str = "SNOMED\t267036007\tWeight Loss\tweight decrease|losing weight\n\
                           RXNORM\t1546454\tFOLFIRINOX\n\
                           LOINC\t24108-3\tCA 19-9\tcancer antigen 19-9\n\
                           SNOMED\t271737000\tAnemia\n";

    #[test]
    fn vocab_rows() {
        let load = parse_vocab(FIXTURE, &UriPolicy::default());
        assert!(load.diagnostics.is_empty());
        let wl = load.terms.iter().find(|t| t.code == "267036007").unwrap();
        assert_eq!(wl.synonyms, vec!["weight decrease", "losing weight"]);
        assert_eq!(wl.uri.as_str(), "http://snomed.info/id/267036007");
        let rx = load.terms.iter().find(|t| t.code == "1546454").unwrap();
        assert!(rx.synonyms.is_empty());
        assert_eq!(rx.uri.as_str(), "http://example.org/vocab/rxnorm/1546454");
        assert!(parse_vocab("", &UriPolicy::default()).terms.is_empty());
    }

    #[test]
    fn vocab_diagnostics() {
        let load = parse_vocab(
            "SNOMED\t1\tOld\nSNOMED\t1\tNew\nbad row\nFOO\t2\tx\n",
            &UriPolicy::default(),
        );
        assert_eq!(load.terms.len(), 1);
        assert_eq!(load.terms[0].label, "New");
        assert_eq!(load.diagnostics.len(), 3);
    }

    #[test]
    fn missing_vocab_file() {
        assert!(matches!(
            load_vocab(Path::new("/nonexistent/vocab.tsv"), &UriPolicy::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn minting_is_injective() {
        let p = UriPolicy::default();
        assert_ne!(p.mint(Vocabulary::Loinc, "a/b").unwrap(), p.mint(Vocabulary::Loinc, "a%2Fb").unwrap());
        assert_ne!(p.mint(Vocabulary::Loinc, "1").unwrap(), p.mint(Vocabulary::Icd, "1").unwrap());
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(lexical_similarity("weight loss", "Weight Loss"), 1.0);
        assert!((lexical_similarity("FOLFRINOX", "FOLFIRINOX") - 0.9474).abs() < 0.001);
        assert!(lexical_similarity("xyz", "weight loss") < 0.3);
    }

    #[test]
    fn mapping_examples() {
        let idx = index(FIXTURE);
        let m = map_concept("Weight Loss", &idx, 1.0, 0.55).unwrap().unwrap();
        assert_eq!(m.term.code, "267036007");
        assert_eq!(m.score, 1.0);
        let m = map_concept("FOLFIRINOX", &idx, 0.6, 0.55).unwrap().unwrap();
        assert_eq!(m.term.vocabulary, Vocabulary::RxNorm);
        assert!(map_concept("qwzzt", &idx, 0.6, 0.55).unwrap().is_none());
        let m = map_concept("losing weight", &idx, 0.6, 0.55).unwrap().unwrap();
        assert_eq!(m.term.code, "267036007");
        assert!(map_concept("x", &idx, 1.5, 0.55).is_err());
    }

    #[test]
    fn empty_vocab_is_error() {
        assert!(VocabIndex::new(vec![], Arc::new(NgramHashEmbedder::default())).is_err());
    }

    #[test]
    fn ties_prefer_vocabulary_priority() {
        let idx = index("GO\t1\tFibrosis\nICD\t9\tFibrosis\nSNOMED\t5\tFibrosis\nSNOMED\t3\tFibrosis\n");
        let m = map_concept("fibrosis", &idx, 0.6, 0.55).unwrap().unwrap();
        assert_eq!((m.term.vocabulary, m.term.code.as_str()), (Vocabulary::Snomed, "3"));
    }

    #[test]
    fn unmapped_rates() {
        assert!((unmapped_rate(290, 2) - 0.0069).abs() < 1e-4);
        assert_eq!(unmapped_rate(10, 0), 0.0);
        assert_eq!(unmapped_rate(10, 10), 1.0);
        assert_eq!(unmapped_rate(0, 0), 0.0);
    }

    fn iri(s: &str) -> Iri {
        Iri::new(format!("http://example.org/kg#{s}")).unwrap()
    }

    #[test]
    fn schema_from_mappings_and_uses() {
        let idx = index(FIXTURE);
        let m = map_concept("Weight Loss", &idx, 0.6, 0.55).unwrap().unwrap();
        let rx = map_concept("FOLFIRINOX", &idx, 0.6, 0.55).unwrap().unwrap();
        let obs = Iri::new("http://hl7.org/fhir/Observation").unwrap();
        let lab = iri("LabTest");
        let cond = Iri::new("http://hl7.org/fhir/Condition").unwrap();
        let uses = vec![
            PredicateUse { predicate: iri("hasLabResult"), domain: obs.clone(), range: lab.clone() },
            PredicateUse { predicate: iri("hasLabResult"), domain: obs.clone(), range: lab.clone() },
            PredicateUse { predicate: iri("hasLabResult"), domain: cond.clone(), range: lab.clone() },
        ];
        let schema = build_schema(&[m, rx], &uses, &[]).unwrap();
        assert!(schema.contains(&SchemaDecl::ClassDecl {
            class: Iri::new("http://snomed.info/id/267036007").unwrap()
        }));
        assert!(!schema.iter().any(|d| matches!(d, SchemaDecl::ClassDecl { class } if class.as_str().contains("rxnorm"))));
        assert!(schema.contains(&SchemaDecl::DomainRange { property: iri("hasLabResult"), domain: obs, range: lab }));
        assert!(schema.contains(&SchemaDecl::ObjectProperty { property: iri("hasLabResult") }));
    }

    #[test]
    fn tbox_parsing() {
        let decls = parse_tbox(
            "# axioms\n@prefix ex: <http://ex.org/> .\nSubClassOf kg:ElevatedCA19_9 kg:AbnormalTumorMarker\n\
             Restriction ex:Biopsy ex:hasOutcome ex:Malignant ex:PositiveFinding\nClass <http://ex.org/A>\n",
        )
        .unwrap();
        assert_eq!(decls.len(), 3);
        assert_eq!(
            decls[0],
            SchemaDecl::SubClassOf { sub: iri("ElevatedCA19_9"), sup: iri("AbnormalTumorMarker") }
        );
        let err = parse_tbox("Class a:b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_tbox("SubClassOf kg:A\n").is_err());
        assert!(parse_tbox("Frob kg:A\n").is_err());
    }

    #[test]
    fn tbox_cycles() {
        let tbox = parse_tbox("SubClassOf kg:A kg:B\nSubClassOf kg:B kg:A\n").unwrap();
        match build_schema(&[], &[], &tbox) {
            Err(Error::Cycle(path)) => {
                assert_eq!(path.first(), path.last());
                assert_eq!(path.len(), 3);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
        let chain = parse_tbox("SubClassOf kg:A kg:B\nSubClassOf kg:B kg:C\nSubClassOf kg:A kg:C\n").unwrap();
        assert!(build_schema(&[], &[], &chain).is_ok());
    }
}
