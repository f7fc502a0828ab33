//! Builds the pairwise judge program from a labelled example bank.
//!
//! Compilation carves a validation split out of the training examples, then
//! for each candidate bootstraps rationale-bearing demos with a teacher model
//! (kept only when the teacher agrees with the gold label), tops them up with
//! raw labelled demos, and scores the candidate by exact-match accuracy on
//! validation. The best candidate wins; ties go to the lowest index.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{CompletionSettings, Gateway};
use crate::program::{
    parse_meaning, parse_teacher_answer, render_pair_prompt, render_teacher_prompt, CompileMetadata,
    CompiledJudgePrompt, Meaning, MeaningExample, DEFAULT_ANSWER_PREFIX, DEFAULT_INSTRUCTIONS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleBank {
    pub examples: Vec<MeaningExample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub similar: usize,
    pub different: usize,
}

impl ExampleBank {
    pub fn new(examples: Vec<MeaningExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Input("example bank is empty".into()));
        }
        for e in &examples {
            e.validate()?;
        }
        let bank = ExampleBank { examples };
        let c = bank.counts();
        if c.similar == 0 || c.different == 0 {
            return Err(Error::Input("example bank needs both similar and different pairs".into()));
        }
        Ok(bank)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let examples: Vec<MeaningExample> =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("example bank: {e}")))?;
        Self::new(examples)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn counts(&self) -> LabelCounts {
        let similar = self.examples.iter().filter(|e| e.meaning == Meaning::Similar).count();
        LabelCounts { similar, different: self.examples.len() - similar }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

fn shuffled<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` examples train.
pub fn split(
    examples: &[MeaningExample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<MeaningExample>, Vec<MeaningExample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Input(format!("train fraction {train_fraction} is not in (0, 1)")));
    }
    let n = examples.len();
    let n_train = (n as f64 * train_fraction + 1e-9).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Input(format!("splitting {n} examples at {train_fraction} leaves one side empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = shuffled(examples, &mut rng);
    let test = all.split_off(n_train);
    Ok((all, test))
}

pub fn exact_match_metric(gold: Meaning, predicted: Meaning) -> bool {
    gold == predicted
}

pub type Metric = fn(Meaning, Meaning) -> bool;

#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrapped {
    pub demos: Vec<MeaningExample>,
    /// Indices into the training slice that produced the demos.
    pub used: Vec<usize>,
    pub teacher_calls: usize,
}

/// Asks the teacher for a rationale and verdict on seeded-shuffled training
/// pairs, keeping those whose verdict passes `metric` against the gold label.
pub fn bootstrap_demos(
    train: &[MeaningExample],
    teacher: &dyn Gateway,
    settings: &CompletionSettings,
    metric: Metric,
    max_bootstrapped: usize,
    seed: u64,
) -> Result<Bootstrapped> {
    let mut out = Bootstrapped { demos: Vec::new(), used: Vec::new(), teacher_calls: 0 };
    if max_bootstrapped == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for i in order {
        let ex = &train[i];
        let prompt = render_teacher_prompt(DEFAULT_INSTRUCTIONS, DEFAULT_ANSWER_PREFIX, &out.demos, &ex.text_1, &ex.text_2);
        let resp = teacher.complete(&settings.request(prompt))?;
        out.teacher_calls += 1;
        let (rationale, predicted) = match parse_teacher_answer(&resp.text) {
            Ok(v) => v,
            Err(Error::JudgeContract { .. }) => continue,
            Err(e) => return Err(e),
        };
        if metric(ex.meaning, predicted) {
            out.demos.push(MeaningExample {
                augmented: true,
                text_1: ex.text_1.clone(),
                text_2: ex.text_2.clone(),
                rationale: Some(rationale),
                meaning: ex.meaning,
            });
            out.used.push(i);
            if out.demos.len() == max_bootstrapped {
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileParams {
    pub max_bootstrapped: usize,
    pub max_raw: usize,
    pub num_candidates: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CompileParams {
    fn default() -> Self {
        CompileParams { max_bootstrapped: 4, max_raw: 16, num_candidates: 8, val_fraction: 0.25, seed: 0 }
    }
}

fn candidate_seed(seed: u64, candidate: usize) -> u64 {
    seed.wrapping_add(1).wrapping_add((candidate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub parse_failures: usize,
}

/// Accuracy of the program on labelled pairs; unparsable answers count as misses.
pub fn evaluate(
    compiled: &CompiledJudgePrompt,
    testset: &[MeaningExample],
    gateway: &dyn Gateway,
    settings: &CompletionSettings,
) -> Result<Evaluation> {
    if testset.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mut correct = 0;
    let mut parse_failures = 0;
    for ex in testset {
        let prompt = render_pair_prompt(compiled, &ex.text_1, &ex.text_2);
        let resp = gateway.complete(&settings.request(prompt))?;
        match parse_meaning(&resp.text) {
            Ok(m) if exact_match_metric(ex.meaning, m) => correct += 1,
            Ok(_) => {}
            Err(Error::JudgeContract { .. }) => parse_failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / testset.len() as f64,
        correct,
        total: testset.len(),
        parse_failures,
    })
}

pub fn compile(
    train: &[MeaningExample],
    params: &CompileParams,
    lm: &dyn Gateway,
    settings: &CompletionSettings,
) -> Result<CompiledJudgePrompt> {
    if params.num_candidates == 0 {
        return Err(Error::Input("num_candidates must be at least 1".into()));
    }
    let n = train.len();
    let n_val = ((n as f64 * params.val_fraction + 1e-9).floor() as usize).max(1);
    if n_val >= n {
        return Err(Error::Input(format!("{n} training examples are too few to carve a validation set")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut shuffled_train = shuffled(train, &mut rng);
    let pool = shuffled_train.split_off(n_val);
    let validation = shuffled_train;

    let mut best: Option<(f64, usize, CompiledJudgePrompt)> = None;
    let mut scores = Vec::with_capacity(params.num_candidates);
    for c in 0..params.num_candidates {
        let cseed = candidate_seed(params.seed, c);
        let boot = bootstrap_demos(&pool, lm, settings, exact_match_metric, params.max_bootstrapped, cseed)?;
        let mut rest: Vec<usize> = (0..pool.len()).filter(|i| !boot.used.contains(i)).collect();
        let mut raw_rng = ChaCha8Rng::seed_from_u64(cseed);
        raw_rng.set_stream(1);
        rest.shuffle(&mut raw_rng);
        let raw = rest.iter().take(params.max_raw).map(|&i| {
            let e = &pool[i];
            MeaningExample::raw(e.text_1.clone(), e.text_2.clone(), e.meaning)
        });
        let candidate = CompiledJudgePrompt::new(boot.demos.into_iter().chain(raw).collect());
        let score = evaluate(&candidate, &validation, lm, settings)?.accuracy;
        log::info!("candidate {c}: validation accuracy {score:.3}");
        scores.push(score);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, c, candidate));
        }
    }
    let (score, winner, mut program) = best.expect("at least one candidate");
    if score == 0.0 {
        log::warn!("every candidate scored 0 on validation");
    }
    program.metadata = Some(CompileMetadata {
        validation_score: score,
        compile_seed: params.seed,
        teacher_model: settings.model_id.clone(),
        num_candidates: params.num_candidates,
        winning_candidate: winner,
        candidate_scores: scores,
        validation,
    });
    Ok(program)
}
