//! Deterministic 12-interview fixture shared by the CLI tests.
//!
//! Codes are drawn from 70 themes; two codes are duplicates exactly when they
//! share a theme. Interview sizes sum to 175, so any consistent judge yields
//! 70 unique codes and ITS 0.40.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use codesat_core::codebook::{InitialCode, InterviewCodeSet};
use codesat_core::coder::build_coding_prompt;
use codesat_core::gateway::{
    prompt_digest, CompletionRequest, CompletionResponse, CompletionSettings, Gateway, GatewayError, ScriptFile,
};
use codesat_core::judge::{PairwiseJudge, SimilarityTable, TableGateway, ZeroShotJudge};
use codesat_core::program::CompiledJudgePrompt;
use codesat_core::reducer::reduce;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const SIZES: [usize; 12] = [15, 14, 15, 15, 14, 15, 14, 15, 15, 15, 14, 14];
pub const NEW_THEMES: [usize; 12] = [15, 9, 8, 7, 6, 6, 5, 4, 4, 3, 2, 1];

const SUBJECTS: [&str; 10] = [
    "Remote work",
    "Team trust",
    "Tool adoption",
    "Code review",
    "Deadline pressure",
    "Peer learning",
    "Client communication",
    "Personal autonomy",
    "Product quality",
    "Staff wellbeing",
];
const FACETS: [&str; 7] = ["benefits", "barriers", "habits", "expectations", "conflicts", "support", "change"];

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn theme_parts(t: usize) -> (&'static str, &'static str) {
    (SUBJECTS[t % SUBJECTS.len()], FACETS[t / SUBJECTS.len()])
}

fn code_for(theme: usize, interview: usize) -> InitialCode {
    let (subject, facet) = theme_parts(theme);
    InitialCode::new(
        format!("{subject} {facet}"),
        format!("Participant {interview} describes the {facet} of {} in daily work.", subject.to_lowercase()),
        format!("For me the {facet} around {} shaped most of my week.", subject.to_lowercase()),
    )
    .unwrap()
}

/// Theme ids per interview, in interview order.
pub fn theme_plan() -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut seen: Vec<usize> = Vec::new();
    let mut plan = Vec::new();
    for (k, (&size, &new)) in SIZES.iter().zip(&NEW_THEMES).enumerate() {
        let fresh: Vec<usize> = (seen.len()..seen.len() + new).collect();
        let mut themes: Vec<usize> = seen.choose_multiple(&mut rng, size - new).copied().collect();
        themes.extend(&fresh);
        if k > 0 {
            themes.shuffle(&mut rng);
        }
        seen.extend(fresh);
        plan.push(themes);
    }
    plan
}

pub struct Fixture {
    pub root: PathBuf,
    pub sets: Vec<InterviewCodeSet>,
    pub table: SimilarityTable,
    /// Judge calls in the order the zero-shot judge makes them.
    pub zero_shot_calls: Vec<String>,
    pub compiled_calls: Vec<String>,
}

fn transcript(interview: usize, codes: &[InitialCode]) -> String {
    let mut t = format!("Interview {interview}\n\nInterviewer: Tell me about your work over the last months.\n\n");
    for c in codes {
        t.push_str(&format!("Participant: {} {}\n\n", c.quote, c.description));
    }
    t
}

struct Recorder<G> {
    inner: G,
    calls: Mutex<Vec<(String, String)>>,
}

impl<G: Gateway> Gateway for Recorder<G> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let resp = self.inner.complete(request)?;
        self.calls.lock().unwrap().push((prompt_digest(&request.prompt), resp.text.clone()));
        Ok(resp)
    }
}

fn record(
    sets: &[InterviewCodeSet],
    table: &SimilarityTable,
    program: Option<&CompiledJudgePrompt>,
) -> Vec<(String, String)> {
    let rec = Recorder { inner: TableGateway::new(table.clone()), calls: Mutex::new(Vec::new()) };
    let settings = CompletionSettings::new("fixture-model");
    match program {
        None => reduce(sets, &ZeroShotJudge::new(&rec, settings)).unwrap(),
        Some(p) => reduce(sets, &PairwiseJudge::new(&rec, settings, p.clone())).unwrap(),
    };
    rec.calls.into_inner().unwrap()
}

fn write(path: &Path, text: impl AsRef<[u8]>) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

/// Writes corpus, scripts, pair table, compiled program and configs under `root`.
pub fn build_fixture(root: &Path) -> Fixture {
    let plan = theme_plan();
    let mut sets = Vec::new();
    let mut coding = BTreeMap::new();
    let mut by_theme: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (k, themes) in plan.iter().enumerate() {
        let interview = k + 1;
        let codes: Vec<InitialCode> = themes.iter().map(|&t| code_for(t, interview)).collect();
        for (&t, c) in themes.iter().zip(&codes) {
            by_theme.entry(t).or_default().push(c.judge_text());
        }
        let text = transcript(interview, &codes);
        write(&root.join(format!("corpus/int{interview:02}.txt")), &text);
        let payload = json!({
            "Codes": codes
                .iter()
                .map(|c| json!({"Name": c.name, "Description": c.description, "Quote": c.quote}))
                .collect::<Vec<_>>()
        });
        let answer = if interview % 2 == 0 {
            format!("```json\n{}\n```", serde_json::to_string_pretty(&payload).unwrap())
        } else {
            format!("Here are the codes.\n{payload}")
        };
        coding.insert(prompt_digest(&build_coding_prompt(&text, 15).unwrap()), answer);
        sets.push(InterviewCodeSet::new(format!("int{interview:02}"), interview, codes).unwrap());
    }
    ScriptFile::Digest(coding).save(&root.join("coding_script.json")).unwrap();

    let mut table = SimilarityTable::new();
    let mut pairs = Vec::new();
    for texts in by_theme.values() {
        for (i, a) in texts.iter().enumerate() {
            for b in &texts[i + 1..] {
                table.insert(a, b);
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    write(&root.join("pairs.json"), serde_json::to_string_pretty(&pairs).unwrap());

    let program = CompiledJudgePrompt::load(&workspace_root().join("fixtures/reference_program.json")).unwrap();
    program.save(&root.join("compiled.json")).unwrap();
    let zero = record(&sets, &table, None);
    let compiled = record(&sets, &table, Some(&program));
    let judge_script: BTreeMap<String, String> = zero.iter().chain(&compiled).cloned().collect();
    ScriptFile::Digest(judge_script).save(&root.join("judge_script.json")).unwrap();

    write_config(root, "config.toml", "judge_script.json");
    Fixture {
        root: root.to_path_buf(),
        sets,
        table,
        zero_shot_calls: zero.into_iter().map(|c| c.0).collect(),
        compiled_calls: compiled.into_iter().map(|c| c.0).collect(),
    }
}

pub fn write_config(root: &Path, name: &str, judge_script: &str) -> PathBuf {
    let path = root.join(name);
    write(
        &path,
        format!(
            r#"corpus = "corpus"
output = "out"
model_id = "fixture-model"
judge = "zero-shot"
compiled_prompt = "compiled.json"
stub_table = "pairs.json"
coding_workers = 4

[gateway]
backend = "scripted"
script = "coding_script.json"
judge_script = "{judge_script}"
"#
        ),
    );
    path
}

/// Copy of the judge script with one response replaced.
pub fn corrupt_script(root: &Path, digest: &str, response: &str, name: &str) {
    let ScriptFile::Digest(mut map) = ScriptFile::load(&root.join("judge_script.json")).unwrap() else {
        panic!("judge script is digest keyed")
    };
    map.insert(digest.to_string(), response.to_string());
    ScriptFile::Digest(map).save(&root.join(name)).unwrap();
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn codesat(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_codesat")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Compares `actual` with the golden file `name`; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(actual: &Path, name: &str) -> Result<(), String> {
    let golden = golden_root().join(name);
    let bytes = std::fs::read(actual).map_err(|e| format!("{}: {e}", actual.display()))?;
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        write(&golden, &bytes);
        return Ok(());
    }
    let expected = std::fs::read(&golden).map_err(|e| format!("golden {}: {e}", golden.display()))?;
    if expected == bytes {
        Ok(())
    } else {
        Err(format!("{} differs from golden {name}", actual.display()))
    }
}
