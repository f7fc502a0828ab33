use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_digest, BackendTag, CompletionRequest, CompletionResponse, Gateway, GatewayError};
use crate::error::{Error, Result};

/// On-disk script: either a strict sequence or responses keyed by prompt digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "responses", rename_all = "lowercase")]
pub enum ScriptFile {
    Sequence(Vec<String>),
    Digest(BTreeMap<String, String>),
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub response: String,
}

#[derive(Debug)]
struct State {
    next: usize,
    transcript: Vec<TranscriptEntry>,
}

/// Deterministic playback backend. Calls are serialized.
#[derive(Debug)]
pub struct ScriptedGateway {
    script: ScriptFile,
    state: Mutex<State>,
}

impl ScriptedGateway {
    pub fn new(script: ScriptFile) -> Result<Self> {
        let empty = match &script {
            ScriptFile::Sequence(v) => v.is_empty(),
            ScriptFile::Digest(m) => m.is_empty(),
        };
        if empty {
            return Err(Error::Config("scripted backend needs a non-empty script".into()));
        }
        Ok(ScriptedGateway { script, state: Mutex::new(State { next: 0, transcript: Vec::new() }) })
    }

    pub fn sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(ScriptFile::Sequence(responses.into_iter().map(Into::into).collect()))
    }

    /// Keys are prompts; they are hashed on the way in.
    pub fn keyed_by_prompt<K: AsRef<str>, V: Into<String>>(
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self> {
        let map = pairs
            .into_iter()
            .map(|(k, v)| (prompt_digest(k.as_ref()), v.into()))
            .collect();
        Self::new(ScriptFile::Digest(map))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::new(ScriptFile::load(path)?)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).transcript.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).transcript.len()
    }
}

impl Gateway for ScriptedGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let digest = prompt_digest(&request.prompt);
        let text = match &self.script {
            ScriptFile::Sequence(responses) => {
                let text = responses
                    .get(state.next)
                    .cloned()
                    .ok_or(GatewayError::ScriptUnderrun { calls: state.next })?;
                state.next += 1;
                text
            }
            ScriptFile::Digest(map) => map
                .get(&digest)
                .cloned()
                .ok_or_else(|| GatewayError::ScriptMissing { digest: digest.clone() })?,
        };
        state.transcript.push(TranscriptEntry { digest, response: text.clone() });
        Ok(CompletionResponse { text, usage: None, backend_tag: BackendTag::Scripted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::CompletionSettings;

    fn ask(g: &ScriptedGateway, prompt: &str) -> Result<String, GatewayError> {
        g.complete(&CompletionSettings::new("m").request(prompt)).map(|r| r.text)
    }

    #[test]
    fn sequence_plays_in_order_then_underruns() {
        let g = ScriptedGateway::sequence(["A", "B"]).unwrap();
        assert_eq!(ask(&g, "x").unwrap(), "A");
        assert_eq!(ask(&g, "x").unwrap(), "B");
        assert_eq!(ask(&g, "x"), Err(GatewayError::ScriptUnderrun { calls: 2 }));
    }

    #[test]
    fn digest_mode_is_idempotent() {
        let g = ScriptedGateway::keyed_by_prompt([("p1", "one"), ("p2", "two")]).unwrap();
        assert_eq!(ask(&g, "p2").unwrap(), "two");
        assert_eq!(ask(&g, "p2").unwrap(), "two");
        assert_eq!(ask(&g, "p1").unwrap(), "one");
        assert!(matches!(ask(&g, "p3"), Err(GatewayError::ScriptMissing { .. })));
    }

    #[test]
    fn empty_script_rejected() {
        assert!(ScriptedGateway::sequence(Vec::<String>::new()).is_err());
    }

    #[test]
    fn replays_give_identical_transcripts() {
        let run = || {
            let g = ScriptedGateway::sequence(["a", "b", "c"]).unwrap();
            for p in ["x", "y", "z"] {
                ask(&g, p).unwrap();
            }
            g.transcript()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn script_file_layout() {
        let s = ScriptFile::Sequence(vec!["a".into()]);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v, serde_json::json!({"mode": "sequence", "responses": ["a"]}));
    }
}
