//! Initial coding: one independent prompt per interview, answers parsed into
//! code sets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codebook::{self, InitialCode, InterviewCodeSet, LengthWarning};
use crate::error::{Error, Result};
use crate::gateway::{CompletionSettings, Gateway};
use crate::sequence::AnalysisSequence;

pub const DEFAULT_MAX_CODES: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub interview_id: String,
    pub text: String,
}

/// Reads a directory of `.txt` transcripts (ids from file stems, sorted) or a
/// manifest CSV with columns `interview_id,path` (paths relative to the manifest).
pub fn load_corpus(path: &Path) -> Result<Vec<Transcript>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                read_transcript(id, p)
            })
            .collect::<Result<Vec<_>>>()
            .and_then(non_empty_corpus)
    } else {
        #[derive(Deserialize)]
        struct Row {
            interview_id: String,
            path: PathBuf,
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(f);
        let mut out = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            out.push(read_transcript(row.interview_id, &base.join(row.path))?);
        }
        non_empty_corpus(out)
    }
}

fn read_transcript(interview_id: String, path: &Path) -> Result<Transcript> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Transcript { interview_id, text })
}

fn non_empty_corpus(c: Vec<Transcript>) -> Result<Vec<Transcript>> {
    if c.is_empty() {
        Err(Error::Config("corpus contains no transcripts".into()))
    } else {
        Ok(c)
    }
}

/// The initial-coding prompt with the code count and the transcript filled in.
pub fn build_coding_prompt(transcript: &str, max_codes: usize) -> Result<String> {
    if transcript.trim().is_empty() {
        return Err(Error::Input("transcript is empty".into()));
    }
    if max_codes == 0 {
        return Err(Error::Input("max_codes must be at least 1".into()));
    }
    Ok(format!(
        "Can you assist me in the generation of initial codes to assist me with my thematic analysis.\n\n\
         Identify the {max_codes} most relevant initial codes in the text, provide a meaningful name for each code \
         in no more than 5 words, 30 words simple description of the code, and a max 40 words quote \
         from the participant.\n\n\
         Format the response as a json file keeping names, descriptions and quotes together in the json, \
         and keep them together in 'Codes'.\n\n\
         ```{transcript}```\n"
    ))
}

/// Parses the first JSON object in `raw`, skipping code fences or leading prose.
pub fn extract_json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn squash_key(k: &str) -> String {
    k.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, aliases: &[&str]) -> Option<&'a str> {
    obj.iter()
        .find(|(k, _)| aliases.contains(&squash_key(k).as_str()))
        .and_then(|(_, v)| v.as_str())
}

const NAME_KEYS: &[&str] = &["name", "codename", "code", "label", "title"];
const DESCRIPTION_KEYS: &[&str] = &["description", "codedescription", "desc", "definition"];
const QUOTE_KEYS: &[&str] = &["quote", "quotes", "participantquote", "examplequote", "representativequote"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodingWarning {
    OverLimit { requested: usize, returned: usize },
    SkippedElement { index: usize, reason: String },
    Length { index: usize, warning: LengthWarning },
}

impl std::fmt::Display for CodingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CodingWarning::OverLimit { requested, returned } => {
                write!(f, "model returned {returned} codes, {requested} requested")
            }
            CodingWarning::SkippedElement { index, reason } => write!(f, "skipped code {index}: {reason}"),
            CodingWarning::Length { index, warning } => write!(f, "code {index}: {warning}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodingOutcome {
    pub set: InterviewCodeSet,
    pub warnings: Vec<CodingWarning>,
}

pub fn parse_code_set(raw: &str, interview_id: &str, position: usize, max_codes: usize) -> Result<CodingOutcome> {
    if raw.trim().is_empty() {
        return Err(Error::Parse { reason: "empty response".into(), raw: raw.into() });
    }
    let obj = extract_json_object(raw)
        .ok_or_else(|| Error::Parse { reason: "no JSON object found".into(), raw: raw.into() })?;
    let codes = obj
        .iter()
        .find(|(k, _)| squash_key(k) == "codes")
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Parse { reason: "missing 'Codes' key".into(), raw: raw.into() })?
        .as_array()
        .ok_or_else(|| Error::Parse { reason: "'Codes' is not an array".into(), raw: raw.into() })?;
    if codes.is_empty() {
        return Err(Error::EmptyResult { raw: raw.into() });
    }

    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (index, el) in codes.iter().enumerate() {
        let Some(obj) = el.as_object() else {
            warnings.push(CodingWarning::SkippedElement { index, reason: "not an object".into() });
            continue;
        };
        let name = field(obj, NAME_KEYS).unwrap_or("");
        let description = field(obj, DESCRIPTION_KEYS).unwrap_or("");
        let quote = field(obj, QUOTE_KEYS).unwrap_or("");
        match InitialCode::new(name.trim(), description.trim(), quote.trim()) {
            Ok(code) => {
                warnings.extend(
                    code.length_warnings().into_iter().map(|warning| CodingWarning::Length { index, warning }),
                );
                out.push(code);
            }
            Err(e) => warnings.push(CodingWarning::SkippedElement { index, reason: e.to_string() }),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyResult { raw: raw.into() });
    }
    if out.len() > max_codes {
        warnings.push(CodingWarning::OverLimit { requested: max_codes, returned: out.len() });
    }
    Ok(CodingOutcome { set: InterviewCodeSet::new(interview_id, position, out)?, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingConfig {
    pub settings: CompletionSettings,
    pub max_codes: usize,
    /// Worker threads for independent coding calls.
    pub concurrency: usize,
    /// Longest transcript (in characters) the configured model accepts.
    pub max_transcript_chars: Option<usize>,
}

impl CodingConfig {
    pub fn new(settings: CompletionSettings) -> Self {
        CodingConfig { settings, max_codes: DEFAULT_MAX_CODES, concurrency: 1, max_transcript_chars: None }
    }
}

fn code_one(t: &Transcript, position: usize, config: &CodingConfig, gateway: &dyn Gateway) -> Result<CodingOutcome> {
    let prompt = build_coding_prompt(&t.text, config.max_codes)?;
    let resp = gateway.complete(&config.settings.request(prompt))?;
    parse_code_set(&resp.text, &t.interview_id, position, config.max_codes)
}

/// Codes every interview independently, assigning positions by sequence order.
pub fn code_corpus(
    transcripts: &[Transcript],
    sequence: &AnalysisSequence,
    config: &CodingConfig,
    gateway: &dyn Gateway,
) -> Result<Vec<CodingOutcome>> {
    sequence.validate()?;
    if sequence.len() != transcripts.len() {
        return Err(Error::Config(format!(
            "sequence '{}' covers {} interviews but the corpus has {}",
            sequence.name,
            sequence.len(),
            transcripts.len()
        )));
    }
    if let Some(limit) = config.max_transcript_chars {
        if let Some(t) = transcripts.iter().find(|t| t.text.chars().count() > limit) {
            return Err(Error::Config(format!(
                "transcript {} exceeds the configured limit of {limit} characters",
                t.interview_id
            )));
        }
    }

    let jobs: Vec<(usize, &Transcript)> =
        sequence.order.iter().enumerate().map(|(k, &ord)| (k + 1, &transcripts[ord - 1])).collect();
    let run = |&(position, t): &(usize, &Transcript)| {
        code_one(t, position, config, gateway).map_err(|e| Error::Coding {
            position,
            interview_id: t.interview_id.clone(),
            source: Box::new(e),
        })
    };

    let workers = config.concurrency.max(1).min(jobs.len());
    let mut results: Vec<Result<CodingOutcome>> = if workers == 1 {
        jobs.iter().map(run).collect()
    } else {
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("coding worker panicked")).collect()
        })
    };

    let mut out = Vec::with_capacity(results.len());
    for r in results.drain(..) {
        let outcome = r?;
        for w in &outcome.warnings {
            log::warn!("position {} ({}): {w}", outcome.set.position, outcome.set.interview_id);
        }
        out.push(outcome);
    }
    Ok(out)
}

pub fn code_set_file_name(position: usize) -> String {
    format!("codes_{position:02}.csv")
}

pub fn write_code_sets(dir: &Path, sets: &[InterviewCodeSet]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for set in sets {
        let path = dir.join(code_set_file_name(set.position));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        codebook::write_code_set_csv(std::io::BufWriter::new(f), set)?;
    }
    Ok(())
}

/// Reads every `codes_*.csv` in `dir` back into position-ordered sets.
pub fn read_code_sets(dir: &Path) -> Result<Vec<InterviewCodeSet>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("codes_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let mut entries = Vec::new();
    for f in &files {
        entries.extend(codebook::read_entries_file(f)?);
    }
    codebook::group_into_sets(entries)
}
