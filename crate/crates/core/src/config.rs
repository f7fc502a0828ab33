//! Run configuration: a TOML file with `${VAR}` environment interpolation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coder::DEFAULT_MAX_CODES;
use crate::error::{Error, Result};
use crate::sequence::{builtin_by_name, AnalysisSequence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum JudgeMode {
    ZeroShot,
    Compiled,
    /// Offline judge: `always-similar`, `always-different` or `lookup`.
    Stub(String),
}

impl FromStr for JudgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-shot" => Ok(JudgeMode::ZeroShot),
            "compiled" => Ok(JudgeMode::Compiled),
            _ => match s.strip_prefix("stub:") {
                Some(name @ ("always-similar" | "always-different" | "lookup")) => Ok(JudgeMode::Stub(name.into())),
                _ => Err(Error::Config(format!(
                    "unknown judge '{s}' (expected zero-shot, compiled, stub:always-similar, stub:always-different or stub:lookup)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for JudgeMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<JudgeMode> for String {
    fn from(m: JudgeMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for JudgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JudgeMode::ZeroShot => f.write_str("zero-shot"),
            JudgeMode::Compiled => f.write_str("compiled"),
            JudgeMode::Stub(name) => write!(f, "stub:{name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    /// Scripted responses for coding calls.
    pub script: Option<PathBuf>,
    /// Scripted responses for judge calls (and the compile teacher).
    pub judge_script: Option<PathBuf>,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

fn default_max_concurrency() -> usize {
    4
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            backend: Backend::Live,
            endpoint: default_endpoint(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_concurrency: default_max_concurrency(),
            script: None,
            judge_script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    /// `hash`, `vectors` or `remote`.
    #[serde(default = "default_provider")]
    pub provider: String,
    #[serde(default = "default_embedding_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_embedding_model")]
    pub model_id: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    pub vectors: Option<PathBuf>,
    #[serde(default = "default_hash_dim")]
    pub hash_dim: usize,
    #[serde(default = "default_highlight")]
    pub highlight: f64,
}

fn default_provider() -> String {
    "hash".into()
}

fn default_embedding_endpoint() -> String {
    "https://api.openai.com/v1/embeddings".into()
}

fn default_embedding_model() -> String {
    "all-MiniLM-L6-v2".into()
}

fn default_hash_dim() -> usize {
    256
}

fn default_highlight() -> f64 {
    crate::similarity::DEFAULT_HIGHLIGHT
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: default_provider(),
            endpoint: default_embedding_endpoint(),
            model_id: default_embedding_model(),
            api_key_env: default_key_env(),
            vectors: None,
            hash_dim: default_hash_dim(),
            highlight: default_highlight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of `.txt` transcripts or an `interview_id,path` manifest CSV.
    pub corpus: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Chat model identifier; there is deliberately no default.
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_codes")]
    pub max_codes: usize,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    pub max_transcript_chars: Option<usize>,
    #[serde(default = "one")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_judge")]
    pub judge: JudgeMode,
    pub compiled_prompt: Option<PathBuf>,
    /// Pair table for `stub:lookup`.
    pub stub_table: Option<PathBuf>,
    /// Built-in sequence names (`identity`, `reverse`, `shuffle-a`, `shuffle-b`).
    #[serde(default = "default_sequences")]
    pub sequences: Vec<String>,
    /// User-supplied orders, 1-based interview indices.
    #[serde(default)]
    pub custom_sequences: BTreeMap<String, Vec<usize>>,
    #[serde(default = "one")]
    pub coding_workers: usize,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub embeddings: EmbeddingSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_max_codes() -> usize {
    DEFAULT_MAX_CODES
}

fn default_max_output_tokens() -> u32 {
    4096
}

fn one() -> usize {
    1
}

fn default_judge() -> JudgeMode {
    JudgeMode::ZeroShot
}

fn default_sequences() -> Vec<String> {
    vec!["identity".into()]
}

/// Replaces `${NAME}` with the value of the environment variable `NAME`.
/// `$$` escapes a literal dollar sign.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("$$") {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix("${") {
            let end = body.find('}').ok_or_else(|| Error::Config("unterminated ${ in config".into()))?;
            let name = &body[..end];
            let value = lookup(name)
                .ok_or_else(|| Error::Config(format!("environment variable {name} is not set")))?;
            out.push_str(&value);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    /// Minimal config for a corpus and model; everything else takes its default.
    pub fn for_corpus(corpus: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        let mut c: RunConfig = toml::from_str("corpus = \"\"\nmodel_id = \"\"").expect("defaults parse");
        c.corpus = corpus.into();
        c.model_id = model_id.into();
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let text = interpolate_env(text, |k| std::env::var(k).ok())?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        Ok(config)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        for p in [
            &mut self.compiled_prompt,
            &mut self.stub_table,
            &mut self.gateway.script,
            &mut self.gateway.judge_script,
            &mut self.embeddings.vectors,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id must be set".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.max_codes == 0 {
            return Err(Error::Config("max_codes must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!("temperature {} is outside [0, 2]", self.temperature)));
        }
        if self.sequences.is_empty() && self.custom_sequences.is_empty() {
            return Err(Error::Config("no sequences configured".into()));
        }
        if self.judge == JudgeMode::Compiled && self.compiled_prompt.is_none() {
            return Err(Error::Config("judge 'compiled' needs compiled_prompt".into()));
        }
        if self.judge == JudgeMode::Stub("lookup".into()) && self.stub_table.is_none() {
            return Err(Error::Config("judge 'stub:lookup' needs stub_table".into()));
        }
        Ok(())
    }

    /// Resolves every configured sequence against a corpus of `n` interviews.
    pub fn resolve_sequences(&self, n: usize) -> Result<Vec<AnalysisSequence>> {
        let mut out = Vec::new();
        for name in &self.sequences {
            out.push(builtin_by_name(name, n)?);
        }
        for (name, order) in &self.custom_sequences {
            if out.iter().any(|s| &s.name == name) {
                return Err(Error::Config(format!("sequence '{name}' is defined twice")));
            }
            let seq = AnalysisSequence::new(name.clone(), order.clone())?;
            if seq.len() != n {
                return Err(Error::Config(format!(
                    "sequence '{name}' has {} entries but the corpus has {n} interviews",
                    seq.len()
                )));
            }
            out.push(seq);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_interpolation() {
        let env = |k: &str| (k == "KEY").then(|| "secret".to_string());
        assert_eq!(interpolate_env("a=${KEY} $$5 $x", env).unwrap(), "a=secret $5 $x");
        assert!(interpolate_env("${MISSING}", env).is_err());
        assert!(interpolate_env("${KEY", env).is_err());
    }

    #[test]
    fn defaults_apply() {
        let c = RunConfig::from_toml("corpus = \"c\"\nmodel_id = \"m\"").unwrap();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_codes, 15);
        assert_eq!(c.iterations, 1);
        assert_eq!(c.judge, JudgeMode::ZeroShot);
        assert_eq!(c.gateway.backend, Backend::Live);
        assert_eq!(c, RunConfig::for_corpus("c", "m"));
    }

    #[test]
    fn full_config_parses() {
        let c = RunConfig::from_toml(
            r#"
            corpus = "transcripts"
            model_id = "some-model"
            iterations = 7
            judge = "stub:lookup"
            stub_table = "pairs.json"
            sequences = ["identity", "shuffle-a"]
            [custom_sequences]
            five = [2, 1, 3]
            [gateway]
            backend = "scripted"
            script = "coding.json"
            "#,
        )
        .unwrap();
        assert_eq!(c.judge, JudgeMode::Stub("lookup".into()));
        assert_eq!(c.gateway.backend, Backend::Scripted);
        assert!(c.resolve_sequences(12).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let base = "corpus = \"c\"\nmodel_id = \"m\"\n";
        assert!(RunConfig::from_toml("corpus = \"c\"").is_err());
        assert!(RunConfig::from_toml("corpus = \"c\"\nmodel_id = \" \"").is_err());
        assert!(RunConfig::from_toml(&format!("{base}iterations = 0")).is_err());
        assert!(RunConfig::from_toml(&format!("{base}judge = \"fuzzy\"")).is_err());
        assert!(RunConfig::from_toml(&format!("{base}judge = \"compiled\"")).is_err());
        assert!(RunConfig::from_toml(&format!("{base}unknown = 1")).is_err());
    }

    #[test]
    fn custom_sequences_must_be_permutations() {
        let mut c = RunConfig::for_corpus("c", "m");
        c.custom_sequences.insert("bad".into(), vec![1, 1, 3]);
        assert!(matches!(c.resolve_sequences(3), Err(Error::Config(_))));
        c.custom_sequences.insert("bad".into(), vec![3, 1, 2]);
        c.sequences = vec!["reverse".into()];
        let s = c.resolve_sequences(3).unwrap();
        assert_eq!(s[0].order, vec![3, 2, 1]);
        assert_eq!(s[1].order, vec![3, 1, 2]);
    }
}
