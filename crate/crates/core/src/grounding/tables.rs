//! Lexical resources for grounding: synonyms, lemma rules, negation cues and
//! explicit fixes. Each loads from a plain text file with one mapping per line
//! (`#` starts a comment); the built-in defaults cover the common oncology cases.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::folded_words;

const DEFAULT_SYNONYMS: &[(&str, &str)] = &[
    ("dyspneic", "dyspnea"),
    ("shortness of breath", "dyspnea"),
    ("emesis", "vomiting"),
    ("itching", "pruritus"),
    ("weight decrease", "weight loss"),
    ("losing weight", "weight loss"),
    ("lesion", "mass"),
    ("fatigue", "tiredness"),
    ("jaundice", "icterus"),
];

const DEFAULT_LEMMA_RULES: &[(&str, &str)] = &[
    ("-tic", "-sis"),
    ("-ic", "-"),
    ("-ing", "-"),
    ("-ies", "-y"),
    ("dyspneic", "dyspnea"),
    ("febrile", "fever"),
    ("nauseated", "nausea"),
    ("nauseous", "nausea"),
];

const DEFAULT_NEGATION_CUES: &[&str] = &["denies", "denied", "no", "without", "negative for", "absent", "not"];

/// Cues that, placed directly before a term, form an explicit negation pattern.
const PATTERN_CUES: &[&str] = &["denies", "denied", "no", "without", "negative for"];

/// Words that close a negation scope.
const SCOPE_TERMINATORS: &[&str] = &["but", "however", "although", "though", "except", "yet", "reports", "endorses"];

const DEFAULT_FIXES: &[(&str, &str)] = &[
    ("smking", "smoking"),
    ("tamxfn", "tamoxifen"),
    ("bx", "biopsy"),
    ("pancreatc", "pancreatic"),
    ("adenocarcnoma", "adenocarcinoma"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingTables {
    /// Folded phrase → folded synonym phrases (symmetric).
    pub synonyms: BTreeMap<String, BTreeSet<String>>,
    /// Suffix rewrites, longest suffix first.
    pub suffix_rules: Vec<(String, String)>,
    /// Irregular forms → lemma.
    pub irregular: BTreeMap<String, String>,
    /// Negation cues as folded token sequences.
    pub negation_cues: Vec<Vec<String>>,
    /// Folded misspelling → folded replacement phrase.
    pub explicit_fixes: BTreeMap<String, String>,
}

impl Default for GroundingTables {
    fn default() -> Self {
        let mut t = GroundingTables {
            synonyms: BTreeMap::new(),
            suffix_rules: Vec::new(),
            irregular: BTreeMap::new(),
            negation_cues: Vec::new(),
            explicit_fixes: BTreeMap::new(),
        };
        for (a, b) in DEFAULT_SYNONYMS {
            t.add_synonym(a, b);
        }
        for (a, b) in DEFAULT_LEMMA_RULES {
            t.add_lemma_rule(a, b);
        }
        t.negation_cues = DEFAULT_NEGATION_CUES.iter().map(|c| folded_words(c)).collect();
        for (a, b) in DEFAULT_FIXES {
            t.add_fix(a, b);
        }
        t
    }
}

impl GroundingTables {
    pub fn add_synonym(&mut self, a: &str, b: &str) {
        let (a, b) = (fold_phrase(a), fold_phrase(b));
        if a.is_empty() || b.is_empty() || a == b {
            return;
        }
        self.synonyms.entry(a.clone()).or_default().insert(b.clone());
        self.synonyms.entry(b).or_default().insert(a);
    }

    /// `-tic`/`-sis` style pairs are suffix rewrites; anything else is an irregular form.
    pub fn add_lemma_rule(&mut self, from: &str, to: &str) {
        match (from.strip_prefix('-'), to.strip_prefix('-')) {
            (Some(f), Some(t)) => {
                self.suffix_rules.push((f.to_lowercase(), t.to_lowercase()));
                self.suffix_rules.sort_by(|x, y| y.0.len().cmp(&x.0.len()).then(x.0.cmp(&y.0)));
                self.suffix_rules.dedup_by(|x, y| x.0 == y.0);
            }
            _ => {
                self.irregular.insert(from.trim().to_lowercase(), to.trim().to_lowercase());
            }
        }
    }

    pub fn add_fix(&mut self, wrong: &str, right: &str) {
        self.explicit_fixes.insert(fold_phrase(wrong), fold_phrase(right));
    }

    pub fn load_synonyms(&mut self, path: &Path) -> Result<()> {
        for (a, b) in read_pairs(path, "synonym table")? {
            self.add_synonym(&a, &b);
        }
        Ok(())
    }

    pub fn load_lemma_rules(&mut self, path: &Path) -> Result<()> {
        for (a, b) in read_pairs(path, "lemma rules")? {
            self.add_lemma_rule(&a, &b);
        }
        Ok(())
    }

    pub fn load_fixes(&mut self, path: &Path) -> Result<()> {
        for (a, b) in read_pairs(path, "explicit fixes")? {
            self.add_fix(&a, &b);
        }
        Ok(())
    }

    /// Replaces the cue list with the file's contents, one cue per line.
    pub fn load_negation_cues(&mut self, path: &Path) -> Result<()> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.negation_cues = content_lines(&body)
            .map(|(_, l)| folded_words(l))
            .filter(|c| !c.is_empty())
            .collect();
        Ok(())
    }

    /// Lemma of one folded word.
    pub fn lemma(&self, word: &str) -> String {
        if let Some(l) = self.irregular.get(word) {
            return l.clone();
        }
        if word.chars().count() <= 3 {
            return word.to_string();
        }
        for (suffix, repl) in &self.suffix_rules {
            if let Some(stem) = word.strip_suffix(suffix.as_str()) {
                if stem.chars().count() >= 3 {
                    return format!("{stem}{repl}");
                }
            }
        }
        if let Some(stem) = word.strip_suffix('s') {
            if !(stem.ends_with('s') || stem.ends_with('i') || stem.ends_with('u')) {
                return stem.to_string();
            }
        }
        word.to_string()
    }

    pub fn synonyms_of(&self, phrase: &str) -> impl Iterator<Item = &String> {
        self.synonyms.get(phrase).into_iter().flatten()
    }

    pub(crate) fn pattern_cues(&self) -> impl Iterator<Item = &Vec<String>> {
        self.negation_cues
            .iter()
            .filter(|c| PATTERN_CUES.contains(&c.join(" ").as_str()))
    }
}

pub(crate) fn is_scope_terminator(w: &str) -> bool {
    SCOPE_TERMINATORS.contains(&w)
}

fn fold_phrase(s: &str) -> String {
    folded_words(s).join(" ")
}

fn content_lines(body: &str) -> impl Iterator<Item = (usize, &str)> {
    body.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads `left<TAB>right` lines.
fn read_pairs(path: &Path, what: &'static str) -> Result<Vec<(String, String)>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content_lines(&body)
        .map(|(n, l)| {
            l.split_once('\t')
                .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                .ok_or_else(|| Error::Parse {
                    what,
                    line: n,
                    message: "expected two tab-separated columns".into(),
                })
        })
        .collect()
}
