//! Run configuration: one flat TOML table of thresholds and paths.
//!
//! Relative paths resolve against the directory holding the config file.
//! Only `corpus` and `vocab` are required; every threshold has a default.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::EntropyMode;
use crate::grounding::GroundingConfig;
use crate::relations::TrustWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory of `<cohort>/<patient_id>.txt` narratives.
    pub corpus: Option<PathBuf>,
    /// Vocabulary TSV.
    pub vocab: Option<PathBuf>,
    pub tbox: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    /// Recorded agent responses replayed before any live or offline call.
    pub fixtures: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub lemma_rules: Option<PathBuf>,
    pub explicit_fixes: Option<PathBuf>,
    pub negation_cues: Option<PathBuf>,
    pub out: PathBuf,
    pub cohort: Option<String>,
    pub offline: bool,

    /// Entropy threshold for flagging uncertain values.
    pub delta_h: f64,
    pub entropy_mode: EntropyMode,
    pub tau_fuzzy: f64,
    pub gamma_ngram: f64,
    pub tau_typo: f64,
    pub negation_window: usize,
    pub alpha_lex: f64,
    pub map_floor: f64,
    /// Plausibility threshold on J.
    pub delta_j: f64,
    pub epsilon_xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub delta_t: f64,
    /// Cosine threshold for redundant relations.
    pub gamma_red: f64,
    pub n_variants: usize,
    pub n_perturbations: usize,
    pub max_inflight: usize,
    pub max_retries: u32,
    pub strict_encoding: bool,
    pub strict_validation: bool,
    pub degree_includes_types: bool,

    /// Live providers; ignored with `offline`.
    pub endpoint: Option<String>,
    pub extractor_model: String,
    pub refiner_model: String,
    pub judge_model: String,
    pub adversary_model: String,
    pub timeout_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus: None,
            vocab: None,
            tbox: None,
            rules: None,
            fixtures: None,
            synonyms: None,
            lemma_rules: None,
            explicit_fixes: None,
            negation_cues: None,
            out: PathBuf::from("out"),
            cohort: None,
            offline: false,
            delta_h: 0.8,
            entropy_mode: EntropyMode::Sum,
            tau_fuzzy: 90.0,
            gamma_ngram: 0.6,
            tau_typo: 80.0,
            negation_window: 5,
            alpha_lex: 0.6,
            map_floor: 0.55,
            delta_j: 0.7,
            epsilon_xi: 0.2,
            lambda1: 0.4,
            lambda2: 0.3,
            lambda3: 0.3,
            delta_t: 0.65,
            gamma_red: 0.85,
            n_variants: 5,
            n_perturbations: 5,
            max_inflight: 4,
            max_retries: 3,
            strict_encoding: false,
            strict_validation: false,
            degree_includes_types: true,
            endpoint: None,
            extractor_model: "extractor".into(),
            refiner_model: "refiner".into(),
            judge_model: "judge".into(),
            adversary_model: "adversary".into(),
            timeout_secs: 60,
        }
    }
}

impl Config {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Config::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        for p in [
            &mut self.corpus,
            &mut self.vocab,
            &mut self.tbox,
            &mut self.rules,
            &mut self.fixtures,
            &mut self.synonyms,
            &mut self.lemma_rules,
            &mut self.explicit_fixes,
            &mut self.negation_cues,
        ] {
            fix(p);
        }
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
    }

    /// Checks required keys, ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let required = |name: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => Err(Error::Config(format!("missing required key `{name}`"))),
                Some(p) if !p.exists() => Err(Error::Config(format!("`{name}` path {} does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        required("corpus", &self.corpus)?;
        required("vocab", &self.vocab)?;
        for (name, p) in [
            ("tbox", &self.tbox),
            ("rules", &self.rules),
            ("synonyms", &self.synonyms),
            ("lemma_rules", &self.lemma_rules),
            ("explicit_fixes", &self.explicit_fixes),
            ("negation_cues", &self.negation_cues),
        ] {
            if p.is_some() {
                required(name, p)?;
            }
        }
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must lie in [0, 1], got {v}")))
            }
        };
        for (name, v) in [
            ("gamma_ngram", self.gamma_ngram),
            ("alpha_lex", self.alpha_lex),
            ("map_floor", self.map_floor),
            ("delta_j", self.delta_j),
            ("epsilon_xi", self.epsilon_xi),
            ("delta_t", self.delta_t),
            ("gamma_red", self.gamma_red),
        ] {
            unit(name, v)?;
        }
        for (name, v) in [("tau_fuzzy", self.tau_fuzzy), ("tau_typo", self.tau_typo)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::Config(format!("`{name}` must lie in [0, 100], got {v}")));
            }
        }
        if self.gamma_red == 0.0 {
            return Err(Error::Config("`gamma_red` must be positive".into()));
        }
        if !(self.delta_h >= 0.0) {
            return Err(Error::Config(format!("`delta_h` must be non-negative, got {}", self.delta_h)));
        }
        if self.n_variants == 0 || self.n_perturbations == 0 || self.max_inflight == 0 {
            return Err(Error::Config("`n_variants`, `n_perturbations` and `max_inflight` must be positive".into()));
        }
        self.trust_weights()?;
        if let Some(c) = &self.cohort {
            c.parse::<crate::corpus::Cohort>()?;
        }
        if !self.offline && self.endpoint.is_none() && self.fixtures.is_none() {
            return Err(Error::Config("set `endpoint` or `fixtures`, or run with --offline".into()));
        }
        Ok(())
    }

    pub fn trust_weights(&self) -> Result<TrustWeights> {
        TrustWeights::new(self.lambda1, self.lambda2, self.lambda3).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grounding(&self) -> GroundingConfig {
        GroundingConfig {
            tau_fuzzy: self.tau_fuzzy,
            gamma_ngram: self.gamma_ngram,
            tau_typo: self.tau_typo,
            negation_window: self.negation_window,
            ..GroundingConfig::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::parse("delta_t = 0.7\nlambda1 = 0.5\nlambda2 = 0.25\nlambda3 = 0.25\n").unwrap();
        assert_eq!(c.delta_t, 0.7);
        assert_eq!(c.tau_fuzzy, 90.0);
        assert_eq!(c.trust_weights().unwrap().r, 0.5);
    }

    #[test]
    fn unknown_keys_and_missing_required() {
        assert!(matches!(Config::parse("delta_q = 1"), Err(Error::Config(_))));
        let c = Config::parse("offline = true").unwrap();
        match c.validate() {
            Err(Error::Config(m)) => assert!(m.contains("corpus"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("corpus")).unwrap();
        fs::write(dir.path().join("vocab.tsv"), "").unwrap();
        let path = dir.path().join("kgf.toml");
        fs::write(&path, "corpus = \"corpus\"\nvocab = \"vocab.tsv\"\noffline = true\n").unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.corpus.as_deref(), Some(dir.path().join("corpus").as_path()));
        c.validate().unwrap();
        fs::write(&path, "corpus = \"corpus\"\nvocab = \"missing.tsv\"\noffline = true\n").unwrap();
        assert!(matches!(Config::load(&path).unwrap().validate(), Err(Error::Config(_))));
        fs::write(&path, "corpus = \"corpus\"\nvocab = \"vocab.tsv\"\noffline = true\nlambda1 = 0.9\n").unwrap();
        assert!(Config::load(&path).unwrap().validate().is_err());
    }
}
