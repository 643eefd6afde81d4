//! Loading and sentence segmentation of clinical narratives.
//!
//! A corpus lives on disk as `<root>/<cohort>/<patient_id>.txt`, with optional
//! `.ann` (expert annotations) and `.json` (stored model output) siblings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Cohort {
    Pdac,
    Brca,
    Other,
}

impl Cohort {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::Pdac => "PDAC",
            Cohort::Brca => "BRCA",
            Cohort::Other => "OTHER",
        }
    }

    /// Infers a cohort from a directory name; anything unrecognised is `Other`.
    pub fn from_dir_name(name: &str) -> Cohort {
        name.parse().unwrap_or(Cohort::Other)
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdac" => Ok(Cohort::Pdac),
            "brca" => Ok(Cohort::Brca),
            "other" => Ok(Cohort::Other),
            _ => Err(Error::Config(format!("unknown cohort {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Narrative,
    Annotations,
    ModelOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub span: Span,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalReport {
    pub patient_id: String,
    pub cohort: Cohort,
    pub narrative: String,
    pub sentences: Vec<Sentence>,
    pub source_paths: BTreeMap<SourceKind, PathBuf>,
}

impl ClinicalReport {
    /// Builds a report from in-memory text, segmenting it with the default splitter.
    pub fn from_text(patient_id: impl Into<String>, cohort: Cohort, narrative: impl Into<String>) -> Self {
        let narrative = narrative.into();
        let sentences = segment_sentences(&narrative);
        ClinicalReport {
            patient_id: patient_id.into(),
            cohort,
            narrative,
            sentences,
            source_paths: BTreeMap::new(),
        }
    }

    /// The sentence containing byte offset `pos`, if any.
    pub fn sentence_at(&self, pos: usize) -> Option<&Sentence> {
        self.sentences
            .iter()
            .find(|s| s.span.start <= pos && pos < s.span.end)
    }
}

/// One line of an expert annotation file. Reporting only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub span: Span,
    pub text: String,
}

/// Parses brat-style text-bound annotations: `T1<TAB>Label start end<TAB>text`.
/// Lines that are not text-bound annotations are ignored.
pub fn parse_annotations(content: &str) -> Vec<Annotation> {
    content
        .lines()
        .filter_map(|line| {
            let mut cols = line.split('\t');
            let id = cols.next()?;
            if !id.starts_with('T') {
                return None;
            }
            let mut head = cols.next()?.split_whitespace();
            let label = head.next()?.to_string();
            let start = head.next()?.parse().ok()?;
            let end = head.next()?.parse().ok()?;
            if end < start {
                return None;
            }
            Some(Annotation {
                label,
                span: Span::new(start, end),
                text: cols.next().unwrap_or("").to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub reports: Vec<ClinicalReport>,
    pub issues: Vec<LoadIssue>,
}

/// Loads every `*.txt` narrative under `root` (directly, or one directory deep).
///
/// Cohorts come from `cohort_map` (keyed by patient id) when present, otherwise from
/// the containing directory name. Unreadable files are recorded in `issues` and the
/// load continues. Reports are sorted by patient id.
pub fn load_corpus(root: &Path, cohort_map: Option<&HashMap<String, Cohort>>) -> Result<CorpusLoad> {
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "corpus directory {} does not exist",
            root.display()
        )));
    }
    let mut candidates: Vec<(PathBuf, Cohort)> = Vec::new();
    for entry in read_dir_sorted(root)? {
        if entry.is_dir() {
            let cohort = entry
                .file_name()
                .and_then(|n| n.to_str())
                .map(Cohort::from_dir_name)
                .unwrap_or(Cohort::Other);
            for inner in read_dir_sorted(&entry)? {
                if is_narrative(&inner) {
                    candidates.push((inner, cohort));
                }
            }
        } else if is_narrative(&entry) {
            candidates.push((entry, Cohort::Other));
        }
    }

    let mut load = CorpusLoad::default();
    let mut seen: HashMap<String, PathBuf> = HashMap::new();
    for (path, dir_cohort) in candidates {
        let patient_id = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => {
                load.issues.push(LoadIssue {
                    path,
                    message: "file name is not valid UTF-8".into(),
                });
                continue;
            }
        };
        if let Some(first) = seen.get(&patient_id) {
            load.issues.push(LoadIssue {
                path: path.clone(),
                message: format!("duplicate patient id {patient_id} (first seen at {})", first.display()),
            });
            continue;
        }
        let narrative = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                load.issues.push(LoadIssue {
                    path,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let cohort = cohort_map
            .and_then(|m| m.get(&patient_id).copied())
            .unwrap_or(dir_cohort);
        let mut source_paths = BTreeMap::new();
        for (kind, ext) in [(SourceKind::Annotations, "ann"), (SourceKind::ModelOutput, "json")] {
            let sibling = path.with_extension(ext);
            if sibling.is_file() {
                source_paths.insert(kind, sibling);
            }
        }
        source_paths.insert(SourceKind::Narrative, path.clone());
        seen.insert(patient_id.clone(), path);
        let sentences = segment_sentences(&narrative);
        load.reports.push(ClinicalReport {
            patient_id,
            cohort,
            narrative,
            sentences,
            source_paths,
        });
    }
    load.reports.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    if load.reports.is_empty() {
        log::warn!("no narratives found under {}", root.display());
    }
    Ok(load)
}

fn is_narrative(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e == "txt")
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Abbreviations (lowercase, without the final period) that never end a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "approx", "b.i.d", "cf", "dr", "e.g", "etc", "fig", "hx", "i.e", "mr", "mrs", "ms", "no", "p.o",
    "prof", "q.d", "q.i.d", "st", "t.i.d", "vs",
];

/// Rule-based sentence splitter.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: Vec<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SentenceSplitter {
    pub fn with_abbreviations<I, S>(extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut s = SentenceSplitter::default();
        s.abbreviations
            .extend(extra.into_iter().map(|a| a.into().trim_end_matches('.').to_lowercase()));
        s
    }

    /// Splits at `.`, `!` or `?` when followed by whitespace and then an uppercase
    /// letter, a digit-free line break, or end of text; also at blank lines.
    /// A period closing a known abbreviation does not split.
    pub fn split(&self, text: &str) -> Vec<Sentence> {
        let mut bounds: Vec<usize> = Vec::new();
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        for (k, &(i, c)) in chars.iter().enumerate() {
            if c == '\n' {
                // blank line (only whitespace up to the next newline) ends a paragraph
                let rest = &chars[k + 1..];
                let next_nl = rest.iter().position(|&(_, c)| c == '\n');
                if let Some(p) = next_nl {
                    if rest[..p].iter().all(|&(_, c)| c.is_whitespace()) {
                        bounds.push(i);
                    }
                }
                continue;
            }
            if !matches!(c, '.' | '!' | '?') {
                continue;
            }
            let end = i + c.len_utf8();
            let rest = &chars[k + 1..];
            let ws_len = rest.iter().take_while(|(_, c)| c.is_whitespace()).count();
            let terminates = if rest.is_empty() || ws_len == rest.len() {
                true
            } else if ws_len == 0 {
                false
            } else {
                let saw_newline = rest[..ws_len].iter().any(|&(_, c)| c == '\n');
                let next = rest[ws_len].1;
                saw_newline || next.is_uppercase()
            };
            if terminates && !(c == '.' && self.is_abbreviation(&text[..i])) {
                bounds.push(end);
            }
        }
        bounds.push(text.len());

        let mut out = Vec::new();
        let mut start = 0;
        for b in bounds {
            if b < start {
                continue;
            }
            let piece = &text[start..b];
            let lead = piece.len() - piece.trim_start().len();
            let trimmed = piece.trim();
            if !trimmed.is_empty() {
                let s = start + lead;
                let span = Span::new(s, s + trimmed.len());
                out.push(Sentence {
                    index: out.len(),
                    span,
                    text: trimmed.to_string(),
                });
            }
            start = b;
        }
        out
    }

    fn is_abbreviation(&self, before: &str) -> bool {
        let word_start = before
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_whitespace() || matches!(c, '(' | '[' | '"'))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        let word = before[word_start..].to_lowercase();
        if word.is_empty() {
            return false;
        }
        self.abbreviations.iter().any(|a| *a == word)
    }
}

/// Segments with the default abbreviation list.
pub fn segment_sentences(narrative: &str) -> Vec<Sentence> {
    SentenceSplitter::default().split(narrative)
}
