//! Cumulative reduction from the total codebook to the unique codebook.
//!
//! The first interview's codes seed the UCC wholesale. Every later code, in
//! position order then code order, is checked for an exact (normalized) match
//! and otherwise handed to the judge against the current UCC, including codes
//! appended earlier from the same interview. A checkpoint is emitted after
//! every position so an aborted run can resume from there.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::{
    validate_run, InitialCode, InterviewCodeSet, MatchSource, TotalCumulativeCodebook, UniqueCumulativeCodebook,
    EXACT_MATCH_RATIONALE,
};
use crate::error::{Error, Result};
use crate::judge::DuplicateJudge;
use crate::metrics::PositionCount;

/// Reduction state after a whole number of positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frontier {
    pub digest: String,
    /// Number of code sets fully processed.
    pub completed_sets: usize,
    pub ucc: UniqueCumulativeCodebook,
    pub counts: Vec<PositionCount>,
}

impl Frontier {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn is_complete(&self, sets: usize) -> bool {
        self.completed_sets == sets
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub ucc: UniqueCumulativeCodebook,
    pub tcc: TotalCumulativeCodebook,
    pub counts: Vec<PositionCount>,
}

/// Content digest binding a checkpoint to the code sets it was made from.
pub fn code_sets_digest(sets: &[InterviewCodeSet]) -> String {
    let bytes = serde_json::to_vec(sets).expect("code sets serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn reduce(sets: &[InterviewCodeSet], judge: &dyn DuplicateJudge) -> Result<Reduction> {
    reduce_with_checkpoints(sets, judge, None, &mut |_| Ok(()))
}

pub fn resume(frontier: Frontier, sets: &[InterviewCodeSet], judge: &dyn DuplicateJudge) -> Result<Reduction> {
    reduce_with_checkpoints(sets, judge, Some(frontier), &mut |_| Ok(()))
}

/// Runs (or resumes) a reduction, calling `checkpoint` after every position.
pub fn reduce_with_checkpoints(
    sets: &[InterviewCodeSet],
    judge: &dyn DuplicateJudge,
    start: Option<Frontier>,
    checkpoint: &mut dyn FnMut(&Frontier) -> Result<()>,
) -> Result<Reduction> {
    validate_run(sets)?;
    let tcc = TotalCumulativeCodebook::from_sets(sets);
    let digest = code_sets_digest(sets);

    let mut state = match start {
        Some(f) => {
            if f.digest != digest {
                return Err(Error::DigestMismatch { expected: f.digest, found: digest });
            }
            if f.completed_sets == 0 || f.completed_sets > sets.len() {
                return Err(Error::Structural(format!(
                    "checkpoint claims {} completed sets of {}",
                    f.completed_sets,
                    sets.len()
                )));
            }
            f
        }
        None => {
            let seed = &sets[0];
            let mut ucc = UniqueCumulativeCodebook::new();
            for code in &seed.codes {
                ucc.append_unique(code.clone(), &seed.interview_id, seed.position);
            }
            ucc.close_position();
            let f = Frontier {
                digest: digest.clone(),
                completed_sets: 1,
                counts: vec![PositionCount {
                    position: seed.position,
                    cumulative_total: tcc.cumulative_total_at[0],
                    cumulative_unique: ucc.len(),
                }],
                ucc,
            };
            checkpoint(&f)?;
            f
        }
    };

    for (k, set) in sets.iter().enumerate().skip(state.completed_sets) {
        let mut ucc = state.ucc.clone();
        for (code_index, code) in set.codes.iter().enumerate() {
            if let Err(e) = place_code(&mut ucc, set, code, judge) {
                return Err(Error::Reduction {
                    position: set.position,
                    code_index,
                    frontier: Box::new(state),
                    source: Box::new(e),
                });
            }
        }
        ucc.close_position();
        state.counts.push(PositionCount {
            position: set.position,
            cumulative_total: tcc.cumulative_total_at[k],
            cumulative_unique: ucc.len(),
        });
        state.ucc = ucc;
        state.completed_sets = k + 1;
        checkpoint(&state)?;
    }

    if state.ucc.processed() != tcc.len() {
        return Err(Error::Structural(format!(
            "{} unique + {} duplicates does not account for {} codes",
            state.ucc.len(),
            state.ucc.duplicates.len(),
            tcc.len()
        )));
    }
    Ok(Reduction { ucc: state.ucc, tcc, counts: state.counts })
}

fn place_code(
    ucc: &mut UniqueCumulativeCodebook,
    set: &InterviewCodeSet,
    code: &InitialCode,
    judge: &dyn DuplicateJudge,
) -> Result<()> {
    if let Some(idx) = ucc.find_identical(code) {
        return ucc.record_duplicate(
            code.clone(),
            &set.interview_id,
            set.position,
            Some(idx),
            Some(EXACT_MATCH_RATIONALE.into()),
            MatchSource::ExactMatch,
        );
    }
    let verdict = judge.judge(code, ucc)?;
    if verdict.is_duplicate {
        ucc.record_duplicate(
            code.clone(),
            &set.interview_id,
            set.position,
            verdict.matched_unique_index,
            verdict.rationale,
            MatchSource::Judge,
        )
    } else {
        ucc.append_unique(code.clone(), &set.interview_id, set.position);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::InitialCode;
    use crate::judge::{always_different, always_similar, JudgeVerdict};

    fn sets(sizes: &[usize]) -> Vec<InterviewCodeSet> {
        sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let codes = (0..n)
                    .map(|i| InitialCode::new(format!("p{k}c{i}"), format!("code {i} of {k}"), "q").unwrap())
                    .collect();
                InterviewCodeSet::new(format!("int{k}"), k + 1, codes).unwrap()
            })
            .collect()
    }

    fn pairs(counts: &[PositionCount]) -> Vec<(usize, usize)> {
        counts.iter().map(|c| (c.cumulative_total, c.cumulative_unique)).collect()
    }

    #[test]
    fn no_dedup_limit() {
        let r = reduce(&sets(&[3, 2, 2]), &always_different()).unwrap();
        assert_eq!(r.ucc.len(), 7);
        assert!(r.ucc.duplicates.is_empty());
        assert_eq!(pairs(&r.counts), vec![(3, 3), (5, 5), (7, 7)]);
    }

    #[test]
    fn full_dedup_limit() {
        let r = reduce(&sets(&[3, 2, 2]), &always_similar()).unwrap();
        assert_eq!(r.ucc.len(), 3);
        assert_eq!(r.ucc.duplicates.len(), 4);
        assert_eq!(pairs(&r.counts), vec![(3, 3), (5, 3), (7, 3)]);
    }

    #[test]
    fn seed_set_is_not_deduplicated() {
        let mut s = sets(&[2, 1]);
        s[0].codes[1] = s[0].codes[0].clone();
        let r = reduce(&s, &always_similar()).unwrap();
        assert_eq!(r.ucc.len(), 2);
    }

    #[test]
    fn exact_matches_skip_the_judge() {
        struct Panics;
        impl DuplicateJudge for Panics {
            fn label(&self) -> String {
                "panics".into()
            }
            fn judge(&self, _: &InitialCode, _: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
                panic!("judge should not be called")
            }
        }
        let mut s = sets(&[2, 1]);
        let mut copy = s[0].codes[1].clone();
        copy.name = copy.name.to_uppercase();
        copy.quote = "different quote".into();
        s[1].codes[0] = copy;
        let r = reduce(&s, &Panics).unwrap();
        assert_eq!(r.ucc.duplicates[0].via, MatchSource::ExactMatch);
        assert_eq!(r.ucc.duplicates[0].matched_unique_index, Some(1));
    }

    #[test]
    fn failure_reports_frontier_and_resume_matches() {
        use std::cell::Cell;
        struct FailOnce<'a> {
            calls: &'a Cell<usize>,
            fail_at: usize,
        }
        impl DuplicateJudge for FailOnce<'_> {
            fn label(&self) -> String {
                "flaky".into()
            }
            fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
                self.calls.set(self.calls.get() + 1);
                if self.calls.get() == self.fail_at {
                    return Err(Error::judge_contract("bad", "x"));
                }
                always_different().judge(code, ucc)
            }
        }
        let s = sets(&[3, 2, 2, 2]);
        let golden = reduce(&s, &always_different()).unwrap();
        let calls = Cell::new(0);
        let err = reduce(&s, &FailOnce { calls: &calls, fail_at: 4 }).unwrap_err();
        let Error::Reduction { position, code_index, frontier, .. } = err else { panic!("{err}") };
        assert_eq!((position, code_index), (3, 1));
        assert_eq!(frontier.completed_sets, 2);
        let resumed = resume(*frontier, &s, &always_different()).unwrap();
        assert_eq!(resumed, golden);
    }

    #[test]
    fn resume_checks_digest_and_is_noop_at_end() {
        let s = sets(&[2, 2]);
        let mut last = None;
        let r = reduce_with_checkpoints(&s, &always_different(), None, &mut |f| {
            last = Some(f.clone());
            Ok(())
        })
        .unwrap();
        let end = last.unwrap();
        assert!(end.is_complete(2));
        assert_eq!(resume(end.clone(), &s, &always_similar()).unwrap(), r);
        let other = sets(&[2, 3]);
        assert!(matches!(resume(end, &other, &always_different()), Err(Error::DigestMismatch { .. })));
    }
}
