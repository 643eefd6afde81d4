use regex::Regex;

use super::tables::{is_scope_terminator, GroundingTables};
use super::{fuzzy_ratio, GroundingConfig, GroundingReport, MatchResult, Technique};
use crate::corpus::ClinicalReport;
use crate::extraction::{EavTriple, FhirResourceType};
use crate::text::{casefold, folded_words, word_tokens, Span};

const NEGATIVE_VALUES: &[&str] = &["false", "absent", "no", "negative", "none"];
const POSITIVE_VALUES: &[&str] = &["true", "present", "yes", "positive"];

/// Cues that negate a term when they follow it closely ("chills absent", "HER2 negative").
const TRAILING_CUES: &[&str] = &["absent", "negative", "no", "none", "not", "denied"];

/// `Some(true)` for values asserting absence, `Some(false)` for presence,
/// `None` for ordinary values.
pub(crate) fn negated_value(value: &str) -> Option<bool> {
    let v = casefold(value.trim());
    if NEGATIVE_VALUES.contains(&v.as_str()) {
        Some(true)
    } else if POSITIVE_VALUES.contains(&v.as_str()) {
        Some(false)
    } else {
        None
    }
}

/// Attribute words without a leading resource-type word, so that
/// `observation_chills` looks for "chills".
pub(crate) fn normalized_attribute(attribute: &str) -> Vec<String> {
    let mut words = folded_words(attribute);
    if words.len() > 1 && is_generic(&words[0]) {
        words.remove(0);
    }
    words
}

fn is_generic(word: &str) -> bool {
    word == "medication"
        || FhirResourceType::ALL
            .iter()
            .any(|t| t.as_str().eq_ignore_ascii_case(word))
}

/// Tokenized view of one narrative.
struct Doc<'a> {
    text: &'a str,
    spans: Vec<Span>,
    folded: Vec<String>,
    lemmas: Vec<String>,
    sentence: Vec<usize>,
    /// Token index ranges of each sentence.
    sentence_ranges: Vec<(usize, usize)>,
}

impl<'a> Doc<'a> {
    fn new(report: &'a ClinicalReport, tables: &GroundingTables) -> Self {
        let text = report.narrative.as_str();
        let tokens = word_tokens(text);
        let spans: Vec<Span> = tokens.iter().map(|t| t.span).collect();
        let folded: Vec<String> = tokens.iter().map(|t| casefold(t.text)).collect();
        let lemmas = folded.iter().map(|w| tables.lemma(w)).collect();

        let sents = &report.sentences;
        let mut sentence = Vec::with_capacity(spans.len());
        let mut si = 0;
        for sp in &spans {
            if sents.is_empty() {
                sentence.push(0);
                continue;
            }
            while si < sents.len() && sents[si].span.end <= sp.start {
                si += 1;
            }
            let inside = si < sents.len() && sents[si].span.start <= sp.start;
            sentence.push(if inside { sents[si].index } else { usize::MAX });
        }
        let mut sentence_ranges: Vec<(usize, usize)> = Vec::new();
        for (i, s) in sentence.iter().enumerate() {
            match sentence_ranges.last_mut() {
                Some(r) if sentence[r.0] == *s => r.1 = i + 1,
                _ => sentence_ranges.push((i, i + 1)),
            }
        }
        Doc {
            text,
            spans,
            folded,
            lemmas,
            sentence,
            sentence_ranges,
        }
    }

    /// A semicolon between tokens `a` and `b` closes a negation scope.
    fn clause_break(&self, a: usize, b: usize) -> bool {
        self.text[self.spans[a].end..self.spans[b].start].contains(';')
    }

    fn span(&self, first: usize, end: usize) -> Span {
        Span::new(self.spans[first].start, self.spans[end - 1].end)
    }
}

fn find_seq(hay: &[String], needle: &[String]) -> Vec<(usize, usize)> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| (i, i + needle.len()))
        .collect()
}

fn word_bounded(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    let first = text[start..end].chars().next();
    let last = text[start..end].chars().next_back();
    let ok_before = !(before.is_some_and(char::is_alphanumeric) && first.is_some_and(char::is_alphanumeric));
    let ok_after = !(after.is_some_and(char::is_alphanumeric) && last.is_some_and(char::is_alphanumeric));
    ok_before && ok_after
}

/// A tolerant pattern for values that contain digits: numeric and non-numeric
/// runs may be separated by any amount of whitespace.
fn numeric_pattern(value: &str) -> Option<Regex> {
    if !value.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let numeric = |c: char| c.is_ascii_digit() || c == '.' || c == ',';
    let mut runs: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut cur_numeric = false;
    for c in value.chars() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                runs.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if !cur.is_empty() && numeric(c) != cur_numeric {
            runs.push(std::mem::take(&mut cur));
        }
        cur_numeric = numeric(c);
        cur.push(c);
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    let body: Vec<String> = runs.iter().map(|r| regex::escape(r)).collect();
    Regex::new(&format!("(?i){}", body.join(r"\s*"))).ok()
}

/// Three-stage matcher holding thresholds and lexical tables.
#[derive(Debug, Clone, Default)]
pub struct Grounder {
    cfg: GroundingConfig,
    tables: GroundingTables,
}

impl Grounder {
    pub fn new(cfg: GroundingConfig, tables: GroundingTables) -> Self {
        Grounder { cfg, tables }
    }

    pub fn config(&self) -> &GroundingConfig {
        &self.cfg
    }

    pub fn tables(&self) -> &GroundingTables {
        &self.tables
    }

    pub fn stage1_match(&self, triple: &EavTriple, report: &ClinicalReport) -> Option<MatchResult> {
        self.stage1(triple, &Doc::new(report, &self.tables))
    }

    pub fn stage2_match(&self, triple: &EavTriple, report: &ClinicalReport) -> Option<MatchResult> {
        self.stage2(triple, &Doc::new(report, &self.tables))
    }

    pub fn stage3_match(&self, triple: &EavTriple, report: &ClinicalReport) -> Option<MatchResult> {
        self.stage3(triple, &Doc::new(report, &self.tables))
    }

    pub fn ground(&self, triples: &[EavTriple], report: &ClinicalReport) -> (Vec<MatchResult>, GroundingReport) {
        self.ground_upto(triples, report, 3)
    }

    /// Like [`Grounder::ground`] but only runs stages `1..=max_stage`.
    pub fn ground_upto(
        &self,
        triples: &[EavTriple],
        report: &ClinicalReport,
        max_stage: u8,
    ) -> (Vec<MatchResult>, GroundingReport) {
        let doc = Doc::new(report, &self.tables);
        let results: Vec<MatchResult> = triples
            .iter()
            .map(|t| {
                let mut found = None;
                if max_stage >= 1 {
                    found = self.stage1(t, &doc);
                }
                if found.is_none() && max_stage >= 2 {
                    found = self.stage2(t, &doc);
                }
                if found.is_none() && max_stage >= 3 {
                    found = self.stage3(t, &doc);
                }
                found.unwrap_or_else(|| MatchResult::miss(t))
            })
            .collect();
        let rep = GroundingReport::from_results(report.patient_id.clone(), &results);
        (results, rep)
    }

    fn stage1(&self, t: &EavTriple, doc: &Doc) -> Option<MatchResult> {
        let value = t.value.trim();
        if value.is_empty() {
            return None;
        }
        if let Some(neg) = negated_value(value) {
            let term = folded_words(&t.attribute);
            return self
                .polar(doc, find_seq(&doc.folded, &term), neg)
                .map(|s| MatchResult::hit(t, Technique::BooleanInference, s, 1.0));
        }
        if let Some(s) = self.exact(doc, value) {
            return Some(MatchResult::hit(t, Technique::Exact, s, 100.0));
        }
        if let Some(s) = self.numeric(doc, value) {
            return Some(MatchResult::hit(t, Technique::Regex, s, 100.0));
        }
        if let Some((s, r)) = self.fuzzy(doc, value) {
            return Some(MatchResult::hit(t, Technique::Fuzzy, s, r));
        }
        if let Some((s, j)) = self.ngram(doc, value) {
            return Some(MatchResult::hit(t, Technique::NGram, s, 100.0 * j));
        }
        None
    }

    fn stage2(&self, t: &EavTriple, doc: &Doc) -> Option<MatchResult> {
        let value = t.value.trim();
        if value.is_empty() {
            return None;
        }
        let neg = negated_value(value);
        let target = self.target(t);
        let score = if neg.is_some() { 1.0 } else { 100.0 };

        if neg.is_none() {
            if let Some(&(i, j)) = find_seq(&doc.folded, &target).first() {
                return Some(MatchResult::hit(t, Technique::CaseInsensitive, doc.span(i, j), 100.0));
            }
        }
        if neg == Some(true) {
            for cue in self.tables.pattern_cues() {
                let mut needle = cue.clone();
                needle.extend(target.iter().cloned());
                if let Some(&(i, j)) = find_seq(&doc.folded, &needle).first() {
                    return Some(MatchResult::hit(t, Technique::NegationPattern, doc.span(i, j), 1.0));
                }
            }
        }

        let lemma_target: Vec<String> = target.iter().map(|w| self.tables.lemma(w)).collect();
        if let Some(s) = self.accept(doc, find_seq(&doc.lemmas, &lemma_target), neg) {
            return Some(MatchResult::hit(t, Technique::Lemma, s, score));
        }

        for syn in self.tables.synonyms_of(&target.join(" ")) {
            let words: Vec<String> = syn.split(' ').map(str::to_string).collect();
            let lemmas: Vec<String> = words.iter().map(|w| self.tables.lemma(w)).collect();
            let mut occ = find_seq(&doc.folded, &words);
            occ.extend(find_seq(&doc.lemmas, &lemmas));
            if let Some(s) = self.accept(doc, occ, neg) {
                return Some(MatchResult::hit(t, Technique::Synonym, s, score));
            }
        }
        None
    }

    fn stage3(&self, t: &EavTriple, doc: &Doc) -> Option<MatchResult> {
        let value = t.value.trim();
        if value.is_empty() {
            return None;
        }
        let neg = negated_value(value);
        let target = self.target(t);
        let score = if neg.is_some() { 1.0 } else { 100.0 };

        if neg == Some(true) {
            let mut terms = vec![target.clone()];
            let entity = folded_words(&t.entity);
            if !entity.is_empty() && !(entity.len() == 1 && (is_generic(&entity[0]) || entity[0] == "patient")) {
                terms.push(entity);
            }
            for term in terms {
                let lemmas: Vec<String> = term.iter().map(|w| self.tables.lemma(w)).collect();
                if let Some(s) = self.polar(doc, find_seq(&doc.lemmas, &lemmas), true) {
                    return Some(MatchResult::hit(t, Technique::SentenceNegation, s, 1.0));
                }
            }
        }

        if let Some(s) = self.explicit_fix(doc, &target, neg) {
            return Some(MatchResult::hit(t, Technique::ExplicitFix, s, score));
        }

        if let Some((s, r)) = self.typo(doc, &target, neg) {
            let score = if neg.is_some() { 1.0 } else { r };
            return Some(MatchResult::hit(t, Technique::TypoFix, s, score));
        }
        None
    }

    /// Folded words the later stages look for: the value for ordinary
    /// triples, the normalized attribute for boolean ones.
    fn target(&self, t: &EavTriple) -> Vec<String> {
        if negated_value(&t.value).is_some() {
            normalized_attribute(&t.attribute)
        } else {
            folded_words(&t.value)
        }
    }

    fn accept(&self, doc: &Doc, occ: Vec<(usize, usize)>, neg: Option<bool>) -> Option<Span> {
        match neg {
            None => occ.first().map(|&(i, j)| doc.span(i, j)),
            Some(n) => self.polar(doc, occ, n),
        }
    }

    /// First occurrence whose negation status agrees with the asserted polarity.
    fn polar(&self, doc: &Doc, occ: Vec<(usize, usize)>, negative: bool) -> Option<Span> {
        for (i, j) in occ {
            match (negative, self.governing_cue(doc, i, j)) {
                (true, Some((ci, cj))) => return Some(doc.span(i.min(ci), j.max(cj))),
                (false, None) => return Some(doc.span(i, j)),
                _ => {}
            }
        }
        None
    }

    /// Token range of a negation cue governing tokens `i..j`, if any.
    fn governing_cue(&self, doc: &Doc, i: usize, j: usize) -> Option<(usize, usize)> {
        let sent = doc.sentence[i];
        let lo = i.saturating_sub(self.cfg.negation_window);
        for k in (lo..i).rev() {
            if doc.sentence[k] != sent || is_scope_terminator(&doc.folded[k]) || doc.clause_break(k, k + 1) {
                break;
            }
            for cue in &self.tables.negation_cues {
                let l = cue.len();
                if l == 0 || k + 1 < l {
                    continue;
                }
                let start = k + 1 - l;
                if doc.folded[start..=k] == cue[..] && doc.sentence[start] == sent {
                    return Some((start, k + 1));
                }
            }
        }
        let hi = (j + self.cfg.trailing_window).min(doc.folded.len());
        for k in j..hi {
            if doc.sentence[k] != sent || is_scope_terminator(&doc.folded[k]) || doc.clause_break(k - 1, k) {
                break;
            }
            if TRAILING_CUES.contains(&doc.folded[k].as_str()) {
                return Some((k, k + 1));
            }
        }
        None
    }

    fn exact(&self, doc: &Doc, value: &str) -> Option<Span> {
        doc.text
            .match_indices(value)
            .map(|(s, m)| (s, s + m.len()))
            .find(|&(s, e)| word_bounded(doc.text, s, e))
            .map(|(s, e)| Span::new(s, e))
    }

    fn numeric(&self, doc: &Doc, value: &str) -> Option<Span> {
        let re = numeric_pattern(value)?;
        let found = re
            .find_iter(doc.text)
            .find(|m| word_bounded(doc.text, m.start(), m.end()))
            .map(|m| Span::new(m.start(), m.end()));
        found
    }

    /// Best word-bounded window within three characters of the value's length.
    fn fuzzy(&self, doc: &Doc, value: &str) -> Option<(Span, f64)> {
        let len = value.chars().count();
        let mut best: Option<(Span, f64)> = None;
        for i in 0..doc.spans.len() {
            for j in i..doc.spans.len() {
                let span = Span::new(doc.spans[i].start, doc.spans[j].end);
                let window = span.slice(doc.text);
                let wlen = window.chars().count();
                if wlen > len + 3 {
                    break;
                }
                if wlen + 3 < len {
                    continue;
                }
                let r = fuzzy_ratio(window, value);
                if r > self.cfg.tau_fuzzy && best.is_none_or(|(_, b)| r > b) {
                    best = Some((span, r));
                }
            }
        }
        best
    }

    /// Token-set Jaccard over windows of n-1..=n+1 tokens within one sentence.
    fn ngram(&self, doc: &Doc, value: &str) -> Option<(Span, f64)> {
        let vtoks: Vec<&str> = word_tokens(value).iter().map(|t| t.text).collect();
        let n = vtoks.len();
        if n < 2 {
            return None;
        }
        let mut vset: Vec<&str> = vtoks.clone();
        vset.sort_unstable();
        vset.dedup();
        let mut best: Option<(Span, f64)> = None;
        for &(s0, s1) in &doc.sentence_ranges {
            for w in (n - 1).max(1)..=n + 1 {
                if s1 - s0 < w {
                    continue;
                }
                for i in s0..=s1 - w {
                    let mut wset: Vec<&str> = (i..i + w).map(|k| doc.spans[k].slice(doc.text)).collect();
                    wset.sort_unstable();
                    wset.dedup();
                    let inter = wset.iter().filter(|x| vset.binary_search(x).is_ok()).count();
                    let union = wset.len() + vset.len() - inter;
                    let jac = inter as f64 / union as f64;
                    if jac > self.cfg.gamma_ngram && best.is_none_or(|(_, b)| jac > b) {
                        best = Some((doc.span(i, i + w), jac));
                    }
                }
            }
        }
        best
    }

    fn explicit_fix(&self, doc: &Doc, target: &[String], neg: Option<bool>) -> Option<Span> {
        if target.is_empty() || self.tables.explicit_fixes.is_empty() {
            return None;
        }
        let fixes: Vec<(Vec<String>, Vec<String>)> = self
            .tables
            .explicit_fixes
            .iter()
            .map(|(w, r)| (w.split(' ').map(str::to_string).collect(), r.split(' ').map(str::to_string).collect()))
            .collect();

        // Narrative side: rewrite misspellings, then look for the target.
        let mut stream: Vec<(String, usize, usize, bool)> = Vec::new();
        let mut i = 0;
        while i < doc.folded.len() {
            let hit = fixes
                .iter()
                .filter(|(w, _)| doc.folded[i..].starts_with(w))
                .max_by_key(|(w, _)| w.len());
            match hit {
                Some((w, r)) => {
                    for word in r {
                        stream.push((word.clone(), i, i + w.len(), true));
                    }
                    i += w.len();
                }
                None => {
                    stream.push((doc.folded[i].clone(), i, i + 1, false));
                    i += 1;
                }
            }
        }
        let words: Vec<String> = stream.iter().map(|s| s.0.clone()).collect();
        let occ: Vec<(usize, usize)> = find_seq(&words, target)
            .into_iter()
            .filter(|&(a, b)| stream[a..b].iter().any(|s| s.3))
            .map(|(a, b)| (stream[a].1, stream[b - 1].2))
            .collect();
        if let Some(s) = self.accept(doc, occ, neg) {
            return Some(s);
        }

        // Value side: the extractor may have copied a known misspelling.
        let mut fixed: Vec<String> = Vec::new();
        let mut changed = false;
        let mut i = 0;
        while i < target.len() {
            match fixes.iter().find(|(w, _)| target[i..].starts_with(w)) {
                Some((w, r)) => {
                    fixed.extend(r.iter().cloned());
                    i += w.len();
                    changed = true;
                }
                None => {
                    fixed.push(target[i].clone());
                    i += 1;
                }
            }
        }
        if changed {
            return self.accept(doc, find_seq(&doc.folded, &fixed), neg);
        }
        None
    }

    /// Windows whose tokens each clear `tau_typo` against the target, with at
    /// least one token differing.
    fn typo(&self, doc: &Doc, target: &[String], neg: Option<bool>) -> Option<(Span, f64)> {
        let n = target.len();
        if n == 0 || n > doc.folded.len() {
            return None;
        }
        let mut cands: Vec<((usize, usize), f64)> = Vec::new();
        for i in 0..=doc.folded.len() - n {
            let window = &doc.folded[i..i + n];
            if window == target {
                continue;
            }
            let mut min = f64::INFINITY;
            for (a, b) in window.iter().zip(target) {
                min = min.min(fuzzy_ratio(a, b));
                if min <= self.cfg.tau_typo {
                    break;
                }
            }
            if min > self.cfg.tau_typo {
                cands.push(((i, i + n), min));
            }
        }
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (occ, r) in cands {
            if let Some(s) = self.accept(doc, vec![occ], neg) {
                return Some((s, r));
            }
        }
        None
    }
}
