//! The compiled pairwise judge program: labelled demos plus instructions, its
//! JSON file layout, prompt rendering and answer parsing.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SIMILAR_PHRASE: &str = "the two texts have a similar meaning";
pub const DIFFERENT_PHRASE: &str = "the two texts have a different meaning";
pub const DEFAULT_INSTRUCTIONS: &str = "Given the fields `text_1`, `text_2`, produce the fields `meaning`.";
pub const DEFAULT_ANSWER_PREFIX: &str = "Meaning:";
/// Lead-in the teacher continues when writing a rationale.
pub const REASONING_PREFIX: &str = "Reasoning: Let's think step by step in order to";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Meaning {
    Similar,
    Different,
}

impl Meaning {
    pub fn phrase(self) -> &'static str {
        match self {
            Meaning::Similar => SIMILAR_PHRASE,
            Meaning::Different => DIFFERENT_PHRASE,
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            SIMILAR_PHRASE | "similar" => Ok(Meaning::Similar),
            DIFFERENT_PHRASE | "different" => Ok(Meaning::Different),
            other => Err(Error::Input(format!("unknown meaning label '{other}'"))),
        }
    }
}

impl Serialize for Meaning {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.phrase())
    }
}

impl<'de> Deserialize<'de> for Meaning {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Meaning::parse_label(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeaningExample {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub augmented: bool,
    pub text_1: String,
    pub text_2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub meaning: Meaning,
}

impl MeaningExample {
    pub fn raw(text_1: impl Into<String>, text_2: impl Into<String>, meaning: Meaning) -> Self {
        MeaningExample { augmented: false, text_1: text_1.into(), text_2: text_2.into(), rationale: None, meaning }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rationale.is_some() && !self.augmented {
            return Err(Error::Input("an example with a rationale must be marked augmented".into()));
        }
        if self.text_1.trim().is_empty() || self.text_2.trim().is_empty() {
            return Err(Error::Input("example texts must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileMetadata {
    pub validation_score: f64,
    pub compile_seed: u64,
    pub teacher_model: String,
    pub num_candidates: usize,
    pub winning_candidate: usize,
    pub candidate_scores: Vec<f64>,
    /// Validation split the score was measured on.
    pub validation: Vec<MeaningExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledJudgePrompt {
    pub signature_instructions: String,
    pub answer_prefix: String,
    pub demos: Vec<MeaningExample>,
    pub metadata: Option<CompileMetadata>,
    extras: PredictorExtras,
}

/// Fields of the predictor state kept only so files round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Default)]
struct PredictorExtras {
    lm: Value,
    traces: Vec<Value>,
    train: Vec<Value>,
    extended_signature_instructions: Option<String>,
    extended_signature_prefix: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    #[serde(default)]
    lm: Value,
    #[serde(default)]
    traces: Vec<Value>,
    #[serde(default)]
    train: Vec<Value>,
    demos: Vec<MeaningExample>,
    signature_instructions: String,
    #[serde(default = "default_prefix")]
    signature_prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extended_signature_instructions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extended_signature_prefix: Option<String>,
}

fn default_prefix() -> String {
    DEFAULT_ANSWER_PREFIX.into()
}

#[derive(Serialize, Deserialize)]
struct ProgramFile {
    generate_answer: PredictorFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compile_metadata: Option<CompileMetadata>,
}

impl CompiledJudgePrompt {
    pub fn new(demos: Vec<MeaningExample>) -> Self {
        CompiledJudgePrompt {
            signature_instructions: DEFAULT_INSTRUCTIONS.into(),
            answer_prefix: DEFAULT_ANSWER_PREFIX.into(),
            demos,
            metadata: None,
            extras: PredictorExtras::default(),
        }
    }

    pub fn validation_score(&self) -> Option<f64> {
        self.metadata.as_ref().map(|m| m.validation_score)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ProgramFile {
            generate_answer: PredictorFile {
                lm: self.extras.lm.clone(),
                traces: self.extras.traces.clone(),
                train: self.extras.train.clone(),
                demos: self.demos.clone(),
                signature_instructions: self.signature_instructions.clone(),
                signature_prefix: self.answer_prefix.clone(),
                extended_signature_instructions: self.extras.extended_signature_instructions.clone(),
                extended_signature_prefix: self.extras.extended_signature_prefix.clone(),
            },
            compile_metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProgramFile = serde_json::from_str(text)?;
        let p = file.generate_answer;
        if p.signature_instructions.trim().is_empty() {
            return Err(Error::Input("signature_instructions is empty".into()));
        }
        for d in &p.demos {
            d.validate()?;
        }
        Ok(CompiledJudgePrompt {
            signature_instructions: p.signature_instructions,
            answer_prefix: p.signature_prefix,
            demos: p.demos,
            metadata: file.compile_metadata,
            extras: PredictorExtras {
                lm: p.lm,
                traces: p.traces,
                train: p.train,
                extended_signature_instructions: p.extended_signature_instructions,
                extended_signature_prefix: p.extended_signature_prefix,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn render_demos(out: &mut String, instructions: &str, prefix: &str, demos: &[MeaningExample]) {
    out.push_str(instructions.trim());
    out.push_str("\n\n---\n\nFollow the following format.\n\n");
    out.push_str("Text 1: ${text_1}\n\nText 2: ${text_2}\n\n");
    out.push_str(REASONING_PREFIX);
    out.push_str(" ${produce the meaning}. We ...\n\n");
    out.push_str(prefix);
    out.push_str(" ${meaning}\n\n---\n\n");
    for d in demos {
        out.push_str(&format!("Text 1: {}\n\nText 2: {}\n\n", d.text_1.trim(), d.text_2.trim()));
        if let Some(r) = &d.rationale {
            out.push_str(&format!("{REASONING_PREFIX} {}\n\n", r.trim()));
        }
        out.push_str(&format!("{prefix} {}\n\n---\n\n", d.meaning.phrase()));
    }
}

/// Few-shot prompt for one pair, ending with the open answer prefix.
pub fn render_pair_prompt(compiled: &CompiledJudgePrompt, text_1: &str, text_2: &str) -> String {
    let mut out = String::new();
    render_demos(&mut out, &compiled.signature_instructions, &compiled.answer_prefix, &compiled.demos);
    out.push_str(&format!("Text 1: {}\n\nText 2: {}\n\n{}", text_1.trim(), text_2.trim(), compiled.answer_prefix));
    out
}

/// Prompt asking a teacher to reason about a pair; ends on the reasoning lead-in.
pub fn render_teacher_prompt(
    instructions: &str,
    answer_prefix: &str,
    demos: &[MeaningExample],
    text_1: &str,
    text_2: &str,
) -> String {
    let mut out = String::new();
    render_demos(&mut out, instructions, answer_prefix, demos);
    out.push_str(&format!("Text 1: {}\n\nText 2: {}\n\n{REASONING_PREFIX}", text_1.trim(), text_2.trim()));
    out
}

/// Recovers the query pair from a rendered pair or teacher prompt.
pub fn extract_query_pair(prompt: &str) -> Option<(String, String)> {
    let start = prompt.rfind("Text 1: ")? + "Text 1: ".len();
    let rest = &prompt[start..];
    let mid = rest.find("\n\nText 2: ")?;
    let text_1 = &rest[..mid];
    let rest = &rest[mid + "\n\nText 2: ".len()..];
    let end = rest.find("\n\n").unwrap_or(rest.len());
    Some((text_1.to_string(), rest[..end].to_string()))
}

fn after_last_marker(raw: &str) -> &str {
    let lower = raw.to_lowercase();
    match lower.rfind("meaning:") {
        Some(i) if lower.len() == raw.len() => &raw[i + "meaning:".len()..],
        _ => raw,
    }
}

/// Reads the verdict after the final `Meaning:` marker, or from the whole text.
pub fn parse_meaning(raw: &str) -> Result<Meaning> {
    let tail = after_last_marker(raw).to_lowercase();
    let similar = tail.contains("similar meaning");
    let different = tail.contains("different meaning");
    match (similar, different) {
        (true, false) => Ok(Meaning::Similar),
        (false, true) => Ok(Meaning::Different),
        (true, true) => Err(Error::judge_contract("answer names both similar and different meaning", raw)),
        (false, false) => Err(Error::judge_contract("answer names neither similar nor different meaning", raw)),
    }
}

/// Splits a teacher answer into its rationale and verdict.
pub fn parse_teacher_answer(raw: &str) -> Result<(String, Meaning)> {
    let meaning = parse_meaning(raw)?;
    let lower = raw.to_lowercase();
    let head = match lower.rfind("meaning:") {
        Some(i) if lower.len() == raw.len() => &raw[..i],
        _ => "",
    };
    let mut rationale = head.trim();
    for lead in ["Reasoning:", "Let's think step by step in order to"] {
        rationale = rationale.strip_prefix(lead).unwrap_or(rationale).trim();
    }
    if rationale.is_empty() {
        return Err(Error::judge_contract("teacher gave no rationale", raw));
    }
    Ok((rationale.to_string(), meaning))
}
