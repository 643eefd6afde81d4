//! FHIR-typed entity-attribute-value extraction with entropy-based confidence.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{complete, render_prompt, AgentRequest, AgentRole, CompletionProvider, RetryPolicy, TokenProb};
use crate::corpus::ClinicalReport;
use crate::error::{Error, Result};
use crate::text::{casefold, folded_words, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FhirResourceType {
    Patient,
    Condition,
    Observation,
    Procedure,
    MedicationStatement,
    ImagingStudy,
    DiagnosticReport,
    CarePlan,
    Practitioner,
    Specimen,
    Unknown,
}

impl FhirResourceType {
    pub const ALL: [FhirResourceType; 11] = [
        FhirResourceType::Patient,
        FhirResourceType::Condition,
        FhirResourceType::Observation,
        FhirResourceType::Procedure,
        FhirResourceType::MedicationStatement,
        FhirResourceType::ImagingStudy,
        FhirResourceType::DiagnosticReport,
        FhirResourceType::CarePlan,
        FhirResourceType::Practitioner,
        FhirResourceType::Specimen,
        FhirResourceType::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FhirResourceType::Patient => "Patient",
            FhirResourceType::Condition => "Condition",
            FhirResourceType::Observation => "Observation",
            FhirResourceType::Procedure => "Procedure",
            FhirResourceType::MedicationStatement => "MedicationStatement",
            FhirResourceType::ImagingStudy => "ImagingStudy",
            FhirResourceType::DiagnosticReport => "DiagnosticReport",
            FhirResourceType::CarePlan => "CarePlan",
            FhirResourceType::Practitioner => "Practitioner",
            FhirResourceType::Specimen => "Specimen",
            FhirResourceType::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for FhirResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FhirResourceType {
    type Err = Error;

    /// Exact (case-insensitive) resource name only; use [`assign_fhir_type`] for aliases.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        FhirResourceType::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Domain(format!("not a FHIR resource type: {s:?}")))
    }
}

/// Alias and keyword table behind [`assign_fhir_type`]. Multi-word keys match as
/// whole-word phrases inside the entity; the longest hit wins.
const FHIR_ALIASES: &[(&str, FhirResourceType)] = &[
    ("patient", FhirResourceType::Patient),
    ("pt", FhirResourceType::Patient),
    ("condition", FhirResourceType::Condition),
    ("diagnosis", FhirResourceType::Condition),
    ("disease", FhirResourceType::Condition),
    ("cancer", FhirResourceType::Condition),
    ("carcinoma", FhirResourceType::Condition),
    ("adenocarcinoma", FhirResourceType::Condition),
    ("tumor", FhirResourceType::Condition),
    ("tumour", FhirResourceType::Condition),
    ("mass", FhirResourceType::Condition),
    ("metastasis", FhirResourceType::Condition),
    ("symptom", FhirResourceType::Condition),
    ("problem", FhirResourceType::Condition),
    ("observation", FhirResourceType::Observation),
    ("lab", FhirResourceType::Observation),
    ("labs", FhirResourceType::Observation),
    ("lab test", FhirResourceType::Observation),
    ("lab result", FhirResourceType::Observation),
    ("vital", FhirResourceType::Observation),
    ("vitals", FhirResourceType::Observation),
    ("ca 19 9", FhirResourceType::Observation),
    ("cea", FhirResourceType::Observation),
    ("bilirubin", FhirResourceType::Observation),
    ("ki 67", FhirResourceType::Observation),
    ("her2 status", FhirResourceType::Observation),
    ("weight", FhirResourceType::Observation),
    ("marker", FhirResourceType::Observation),
    ("procedure", FhirResourceType::Procedure),
    ("biopsy", FhirResourceType::Procedure),
    ("surgery", FhirResourceType::Procedure),
    ("resection", FhirResourceType::Procedure),
    ("surgical resection", FhirResourceType::Procedure),
    ("whipple", FhirResourceType::Procedure),
    ("pancreaticoduodenectomy", FhirResourceType::Procedure),
    ("mastectomy", FhirResourceType::Procedure),
    ("lumpectomy", FhirResourceType::Procedure),
    ("endoscopy", FhirResourceType::Procedure),
    ("ercp", FhirResourceType::Procedure),
    ("radiation", FhirResourceType::Procedure),
    ("medication", FhirResourceType::MedicationStatement),
    ("medicationstatement", FhirResourceType::MedicationStatement),
    ("drug", FhirResourceType::MedicationStatement),
    ("chemotherapy", FhirResourceType::MedicationStatement),
    ("folfirinox", FhirResourceType::MedicationStatement),
    ("gemcitabine", FhirResourceType::MedicationStatement),
    ("tamoxifen", FhirResourceType::MedicationStatement),
    ("trastuzumab", FhirResourceType::MedicationStatement),
    ("letrozole", FhirResourceType::MedicationStatement),
    ("imaging", FhirResourceType::ImagingStudy),
    ("imagingstudy", FhirResourceType::ImagingStudy),
    ("ct", FhirResourceType::ImagingStudy),
    ("ct scan", FhirResourceType::ImagingStudy),
    ("scan", FhirResourceType::ImagingStudy),
    ("mri", FhirResourceType::ImagingStudy),
    ("pet", FhirResourceType::ImagingStudy),
    ("ultrasound", FhirResourceType::ImagingStudy),
    ("mammogram", FhirResourceType::ImagingStudy),
    ("mammography", FhirResourceType::ImagingStudy),
    ("x ray", FhirResourceType::ImagingStudy),
    ("report", FhirResourceType::DiagnosticReport),
    ("diagnosticreport", FhirResourceType::DiagnosticReport),
    ("pathology", FhirResourceType::DiagnosticReport),
    ("pathology report", FhirResourceType::DiagnosticReport),
    ("radiology report", FhirResourceType::DiagnosticReport),
    ("plan", FhirResourceType::CarePlan),
    ("careplan", FhirResourceType::CarePlan),
    ("care plan", FhirResourceType::CarePlan),
    ("treatment plan", FhirResourceType::CarePlan),
    ("practitioner", FhirResourceType::Practitioner),
    ("physician", FhirResourceType::Practitioner),
    ("oncologist", FhirResourceType::Practitioner),
    ("surgicaloncologist", FhirResourceType::Practitioner),
    ("surgical oncologist", FhirResourceType::Practitioner),
    ("surgeon", FhirResourceType::Practitioner),
    ("radiologist", FhirResourceType::Practitioner),
    ("pathologist", FhirResourceType::Practitioner),
    ("nurse", FhirResourceType::Practitioner),
    ("specimen", FhirResourceType::Specimen),
    ("sample", FhirResourceType::Specimen),
    ("tissue", FhirResourceType::Specimen),
];

/// Maps a free-text entity to a FHIR resource type by alias lookup.
pub fn assign_fhir_type(entity: &str) -> FhirResourceType {
    let words = folded_words(entity);
    if words.is_empty() {
        return FhirResourceType::Unknown;
    }
    let joined = words.join(" ");
    let compact = words.concat();
    if let Ok(t) = compact.parse::<FhirResourceType>() {
        if t != FhirResourceType::Unknown {
            return t;
        }
    }
    if let Some((_, t)) = FHIR_ALIASES.iter().find(|(k, _)| *k == joined || *k == compact) {
        return *t;
    }
    let padded = format!(" {joined} ");
    FHIR_ALIASES
        .iter()
        .filter(|(k, _)| padded.contains(&format!(" {k} ")))
        .max_by_key(|(k, _)| k.len())
        .map(|(_, t)| *t)
        .unwrap_or(FhirResourceType::Unknown)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EavSource {
    pub patient_id: String,
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EavTriple {
    pub id: String,
    pub entity: String,
    pub fhir_type: FhirResourceType,
    pub attribute: String,
    pub value: String,
    pub value_token_probs: Option<Vec<f64>>,
    pub entropy: Option<f64>,
    pub source: EavSource,
    pub extractor_id: String,
}

impl EavTriple {
    /// A triple without token probabilities, typed via [`assign_fhir_type`].
    pub fn new(
        id: impl Into<String>,
        patient_id: impl Into<String>,
        entity: impl Into<String>,
        attribute: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        let entity = entity.into();
        EavTriple {
            id: id.into(),
            fhir_type: assign_fhir_type(&entity),
            entity,
            attribute: attribute.into(),
            value: value.into(),
            value_token_probs: None,
            entropy: None,
            source: EavSource {
                patient_id: patient_id.into(),
                span: None,
            },
            extractor_id: String::new(),
        }
    }

    /// Attaches token probabilities and their entropy.
    pub fn with_token_probs(mut self, probs: Vec<f64>, mode: EntropyMode) -> Result<Self> {
        self.entropy = Some(value_entropy_with(&probs, mode)?);
        self.value_token_probs = Some(probs);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Sum of `-p ln p` over the value's tokens.
    #[default]
    Sum,
    /// Sum divided by token count.
    Mean,
}

/// Natural-log token entropy `-Σ p ln p` of a value's token probabilities.
pub fn value_entropy(probs: &[f64]) -> Result<f64> {
    value_entropy_with(probs, EntropyMode::Sum)
}

pub fn value_entropy_with(probs: &[f64], mode: EntropyMode) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("entropy of an empty probability list".into()));
    }
    let mut h = 0.0;
    for &p in probs {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0, 1]")));
        }
        h -= p * p.ln();
    }
    // -1·ln 1 is -0.0
    let h = h.max(0.0);
    Ok(match mode {
        EntropyMode::Sum => h,
        EntropyMode::Mean => h / probs.len() as f64,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfidencePartition {
    pub confident: Vec<EavTriple>,
    pub flagged: Vec<EavTriple>,
    pub unknown: Vec<EavTriple>,
}

/// Flags triples whose value entropy exceeds `delta_h`.
pub fn flag_uncertain(triples: Vec<EavTriple>, delta_h: f64) -> ConfidencePartition {
    let mut out = ConfidencePartition::default();
    for t in triples {
        match t.entropy {
            None => out.unknown.push(t),
            Some(h) if h > delta_h => out.flagged.push(t),
            Some(_) => out.confident.push(t),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionOutcome {
    pub triples: Vec<EavTriple>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct RawRecord {
    entity: String,
    fhir_type: Option<String>,
    attribute: String,
    value: String,
    value_range: (usize, usize),
}

/// Parses `key=value | key=value` records, one per line. Returns the parsed
/// records and the number of non-empty lines that were skipped.
fn parse_records(text: &str) -> (Vec<RawRecord>, usize) {
    let mut records = Vec::new();
    let mut skipped = 0;
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let offset = line_start;
        line_start += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() || body.trim_start().starts_with('#') {
            continue;
        }
        let mut fields: BTreeMap<String, (String, usize)> = BTreeMap::new();
        let mut ok = true;
        let mut pos = 0;
        for part in body.split('|') {
            let part_off = pos;
            pos += part.len() + 1;
            match part.split_once('=') {
                Some((k, v)) => {
                    let lead = v.len() - v.trim_start().len();
                    let val_off = offset + part_off + k.len() + 1 + lead;
                    fields.insert(k.trim().to_ascii_lowercase(), (v.trim().to_string(), val_off));
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let get = |k: &str| fields.get(k).filter(|(v, _)| !v.is_empty()).cloned();
        match (ok, get("entity"), get("attribute"), get("value")) {
            (true, Some((entity, _)), Some((attribute, _)), Some((value, voff))) => {
                records.push(RawRecord {
                    entity,
                    fhir_type: get("type").map(|(t, _)| t),
                    attribute,
                    value_range: (voff, voff + value.len()),
                    value,
                })
            }
            _ => skipped += 1,
        }
    }
    (records, skipped)
}

/// Assigns each response byte range the probabilities of the tokens overlapping it.
/// Returns `None` when the tokens do not reassemble the response text.
fn align_token_probs(text: &str, tokens: &[TokenProb], range: (usize, usize)) -> Option<Vec<f64>> {
    let mut pos = 0;
    let mut out = Vec::new();
    for t in tokens {
        let end = pos + t.token.len();
        if text.get(pos..end) != Some(t.token.as_str()) {
            return None;
        }
        if end > range.0 && pos < range.1 && !t.token.trim().is_empty() {
            out.push(t.prob);
        }
        pos = end;
    }
    (!out.is_empty()).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    pub entropy_mode: EntropyMode,
    pub want_token_probs: bool,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            entropy_mode: EntropyMode::Sum,
            want_token_probs: true,
        }
    }
}

/// Parses an extraction response into triples for `report`.
pub fn parse_extraction(
    report: &ClinicalReport,
    text: &str,
    token_probs: Option<&[TokenProb]>,
    extractor_id: &str,
    mode: EntropyMode,
) -> Result<ExtractionOutcome> {
    if text.trim().is_empty() {
        return Ok(ExtractionOutcome {
            triples: Vec::new(),
            skipped: 0,
        });
    }
    let (records, skipped) = parse_records(text);
    if records.is_empty() {
        return Err(Error::Extraction { raw: text.to_string() });
    }
    let folded_narrative = casefold(&report.narrative);
    let mut triples = Vec::with_capacity(records.len());
    for (n, r) in records.into_iter().enumerate() {
        let fhir_type = r
            .fhir_type
            .as_deref()
            .map(assign_fhir_type)
            .filter(|t| *t != FhirResourceType::Unknown)
            .unwrap_or_else(|| assign_fhir_type(&r.entity));
        let probs = token_probs.and_then(|tp| align_token_probs(text, tp, r.value_range));
        let entropy = match &probs {
            Some(p) => Some(value_entropy_with(p, mode)?),
            None => None,
        };
        let span = report
            .narrative
            .find(&r.value)
            .map(|s| Span::new(s, s + r.value.len()))
            .or_else(|| {
                // lowercase can change byte lengths for some scripts
                let f = casefold(&r.value);
                (folded_narrative.len() == report.narrative.len())
                    .then(|| folded_narrative.find(&f).map(|s| Span::new(s, s + f.len())))
                    .flatten()
            });
        triples.push(EavTriple {
            id: format!("{}#{}", report.patient_id, n),
            entity: r.entity,
            fhir_type,
            attribute: r.attribute,
            value: r.value,
            value_token_probs: probs,
            entropy,
            source: EavSource {
                patient_id: report.patient_id.clone(),
                span,
            },
            extractor_id: extractor_id.to_string(),
        });
    }
    Ok(ExtractionOutcome { triples, skipped })
}

pub fn extraction_prompt(report: &ClinicalReport) -> Result<String> {
    let mut ctx = BTreeMap::new();
    ctx.insert("doc", report.narrative.clone());
    render_prompt(crate::agents::prompts::EXTRACT_EAV, &ctx)
}

/// Runs the extractor agent on a report and parses its answer.
pub fn extract_eav(
    report: &ClinicalReport,
    extractor: &dyn CompletionProvider,
    retry: &RetryPolicy,
    opts: &ExtractionOptions,
) -> Result<ExtractionOutcome> {
    let mut request = AgentRequest::new(AgentRole::Extractor, extraction_prompt(report)?);
    request.want_token_probs = opts.want_token_probs;
    let response = complete(&request, extractor, retry)?;
    let out = parse_extraction(
        report,
        &response.text,
        response.token_probs.as_deref(),
        &response.provider_id,
        opts.entropy_mode,
    )?;
    if out.skipped > 0 {
        log::warn!(
            "{}: skipped {} malformed extraction record(s)",
            report.patient_id,
            out.skipped
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentResponse, ProviderError};
    use crate::corpus::Cohort;
    use proptest::prelude::*;

    struct Canned(&'static str, Option<Vec<TokenProb>>);

    impl CompletionProvider for Canned {
        fn id(&self) -> &str {
            "canned"
        }
        fn complete_once(&self, _r: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
            Ok(AgentResponse {
                text: self.0.to_string(),
                token_probs: self.1.clone(),
                provider_id: "canned".into(),
            })
        }
    }

    fn report() -> ClinicalReport {
        ClinicalReport::from_text("p0", Cohort::Pdac, "CA 19-9 was 1200 U/mL. Surgery by SurgicalOncologist.")
    }

    fn run(text: &'static str) -> Result<ExtractionOutcome> {
        extract_eav(
            &report(),
            &Canned(text, None),
            &RetryPolicy::no_delay(0),
            &ExtractionOptions::default(),
        )
    }

    #[test]
    fn lab_result_record() {
        let out = run("entity=Observation | type=Observation | attribute=hasLabResult | value=CA 19-9\n").unwrap();
        assert_eq!(out.triples.len(), 1);
        let t = &out.triples[0];
        assert_eq!(t.fhir_type, FhirResourceType::Observation);
        assert_eq!((t.attribute.as_str(), t.value.as_str()), ("hasLabResult", "CA 19-9"));
        assert_eq!(t.extractor_id, "canned");
        assert_eq!(t.source.span, Some(Span::new(0, 7)));
        assert_eq!(t.entropy, None);
    }

    #[test]
    fn performed_by_record() {
        let out = run("entity=Procedure | type=Procedure | attribute=performed_by | value=SurgicalOncologist").unwrap();
        assert_eq!(out.triples.len(), 1);
        assert_eq!(out.triples[0].fhir_type, FhirResourceType::Procedure);
    }

    #[test]
    fn malformed_records_are_skipped() {
        let out = run(
            "entity=Observation | attribute=a | value=1\n\
             entity=Observation | attribute=b\n\
             entity=Procedure | attribute=c | value=2\n",
        )
        .unwrap();
        assert_eq!(out.triples.len(), 2);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn empty_and_garbage_responses() {
        assert!(run("").unwrap().triples.is_empty());
        assert!(matches!(run("I cannot help with that."), Err(Error::Extraction { .. })));
    }

    #[test]
    fn token_probs_are_aligned_to_values() {
        let text = "entity=Observation | attribute=CA 19-9 | value=1200 U/mL\n";
        let toks = vec![
            TokenProb { token: "entity=Observation | attribute=CA 19-9 | value=".into(), prob: 1.0 },
            TokenProb { token: "1200".into(), prob: 0.9 },
            TokenProb { token: " U/mL".into(), prob: 0.1 },
            TokenProb { token: "\n".into(), prob: 1.0 },
        ];
        let out = extract_eav(&report(), &Canned(text, Some(toks)), &RetryPolicy::no_delay(0), &ExtractionOptions::default())
            .unwrap();
        let t = &out.triples[0];
        assert_eq!(t.value_token_probs, Some(vec![0.9, 0.1]));
        assert!((t.entropy.unwrap() - 0.325083).abs() < 1e-6);
    }

    #[test]
    fn fhir_typing() {
        assert_eq!(assign_fhir_type("CT Scan"), FhirResourceType::ImagingStudy);
        assert_eq!(assign_fhir_type("Observation"), FhirResourceType::Observation);
        assert_eq!(assign_fhir_type("  observation "), FhirResourceType::Observation);
        assert_eq!(assign_fhir_type("MedicationStatement"), FhirResourceType::MedicationStatement);
        assert_eq!(assign_fhir_type("zzz-unknown-entity"), FhirResourceType::Unknown);
        assert_eq!(assign_fhir_type("Core needle biopsy"), FhirResourceType::Procedure);
        assert_eq!(assign_fhir_type("Surgical Oncologist"), FhirResourceType::Practitioner);
        assert_eq!(assign_fhir_type(""), FhirResourceType::Unknown);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(value_entropy(&[1.0]).unwrap(), 0.0);
        assert!((value_entropy(&[0.5, 0.5]).unwrap() - 0.693147).abs() < 1e-6);
        assert!((value_entropy(&[0.9, 0.1]).unwrap() - 0.325083).abs() < 1e-6);
        assert!((value_entropy_with(&[0.5, 0.5], EntropyMode::Mean).unwrap() - 0.346574).abs() < 1e-6);
    }

    #[test]
    fn entropy_errors() {
        assert!(matches!(value_entropy(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(value_entropy(&[0.0]), Err(Error::Domain(_))));
        assert!(matches!(value_entropy(&[1.5]), Err(Error::Domain(_))));
        assert!(matches!(value_entropy(&[f64::NAN]), Err(Error::Domain(_))));
    }

    fn with_entropy(h: Option<f64>) -> EavTriple {
        let mut t = EavTriple::new("x", "p", "Observation", "a", "v");
        t.entropy = h;
        t
    }

    #[test]
    fn flagging() {
        let p = flag_uncertain(vec![with_entropy(Some(0.0)), with_entropy(Some(0.7)), with_entropy(None)], 0.5);
        assert_eq!((p.confident.len(), p.flagged.len(), p.unknown.len()), (1, 1, 1));
        assert_eq!(p.flagged[0].entropy, Some(0.7));
    }

    proptest! {
        #[test]
        fn entropy_permutation_invariant(mut ps in prop::collection::vec(0.001f64..=1.0, 1..12), seed in any::<u64>()) {
            let h = value_entropy(&ps).unwrap();
            prop_assert!(h >= 0.0);
            let n = ps.len();
            ps.rotate_left((seed as usize) % n);
            ps.reverse();
            prop_assert!((value_entropy(&ps).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn zero_threshold_flags_all_positive(hs in prop::collection::vec(prop::option::of(0.0f64..3.0), 0..20)) {
            let ts: Vec<_> = hs.iter().map(|h| with_entropy(*h)).collect();
            let p = flag_uncertain(ts, 0.0);
            prop_assert_eq!(p.confident.len() + p.flagged.len() + p.unknown.len(), hs.len());
            prop_assert_eq!(p.flagged.len(), hs.iter().filter(|h| matches!(h, Some(x) if *x > 0.0)).count());
        }
    }
}
