use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{AgentRequest, AgentResponse, CompletionProvider, ProviderError, TokenProb};

/// Replays recorded responses from a fixture directory.
///
/// Fixtures are named by [`AgentRequest::fixture_key`]: `<key>.txt` holds the raw
/// response text and an optional `<key>.probs` holds `token<TAB>probability` lines.
/// A request without a fixture goes to the fallback provider, or fails.
pub struct MockProvider {
    id: String,
    dir: Option<PathBuf>,
    fallback: Option<Arc<dyn CompletionProvider>>,
}

impl MockProvider {
    pub fn new(id: impl Into<String>, dir: Option<PathBuf>) -> Self {
        MockProvider {
            id: id.into(),
            dir,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn CompletionProvider>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    /// Writes a fixture for `request` so later runs replay `response`.
    pub fn record(dir: &Path, request: &AgentRequest, response: &AgentResponse) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let key = request.fixture_key();
        fs::write(dir.join(format!("{key}.txt")), &response.text)?;
        if let Some(probs) = &response.token_probs {
            let body: String = probs
                .iter()
                .map(|t| format!("{}\t{}\n", escape_token(&t.token), t.prob))
                .collect();
            fs::write(dir.join(format!("{key}.probs")), body)?;
        }
        Ok(())
    }

    fn load(&self, dir: &Path, key: &str) -> Option<std::result::Result<AgentResponse, ProviderError>> {
        let text = fs::read_to_string(dir.join(format!("{key}.txt"))).ok()?;
        let probs = match fs::read_to_string(dir.join(format!("{key}.probs"))) {
            Ok(body) => match parse_probs(&body) {
                Ok(p) => Some(p),
                Err(e) => return Some(Err(ProviderError::Malformed(format!("fixture {key}.probs: {e}")))),
            },
            Err(_) => None,
        };
        Some(Ok(AgentResponse {
            text,
            token_probs: probs,
            provider_id: self.id.clone(),
        }))
    }
}

impl CompletionProvider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_once(&self, request: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
        let key = request.fixture_key();
        if let Some(dir) = &self.dir {
            if let Some(found) = self.load(dir, &key) {
                return found;
            }
        }
        match &self.fallback {
            Some(f) => f.complete_once(request).map(|mut r| {
                r.provider_id = self.id.clone();
                r
            }),
            None => Err(ProviderError::Refusal(format!(
                "no fixture for {} request {key}",
                request.role
            ))),
        }
    }
}

fn escape_token(t: &str) -> String {
    t.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape_token(t: &str) -> String {
    let mut out = String::new();
    let mut chars = t.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_probs(body: &str) -> std::result::Result<Vec<TokenProb>, String> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let (tok, p) = l
                .rsplit_once('\t')
                .ok_or_else(|| format!("line {}: expected token<TAB>prob", i + 1))?;
            let prob: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad probability {p:?}", i + 1))?;
            Ok(TokenProb {
                token: unescape_token(tok),
                prob,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{complete, AgentRole, RetryPolicy};

    #[test]
    fn replays_fixture_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let req = AgentRequest::new(AgentRole::Extractor, "Extract EAV from: Denies chills.");
        let recorded = AgentResponse {
            text: "entity=Condition | attribute=chills | value=absent\n".into(),
            token_probs: Some(vec![
                TokenProb {
                    token: "a\tb".into(),
                    prob: 0.5,
                },
                TokenProb {
                    token: "sent".into(),
                    prob: 0.25,
                },
            ]),
            provider_id: "live".into(),
        };
        MockProvider::record(dir.path(), &req, &recorded).unwrap();
        let mock = MockProvider::new("mock", Some(dir.path().to_path_buf()));
        let a = complete(&req, &mock, &RetryPolicy::default()).unwrap();
        let b = complete(&req, &mock, &RetryPolicy::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, recorded.text);
        assert_eq!(a.token_probs, recorded.token_probs);
        assert_eq!(a.provider_id, "mock");
    }

    #[test]
    fn missing_fixture_without_fallback_fails() {
        let mock = MockProvider::new("mock", None);
        let req = AgentRequest::new(AgentRole::Judge, "x");
        assert!(complete(&req, &mock, &RetryPolicy::default()).is_err());
    }
}
