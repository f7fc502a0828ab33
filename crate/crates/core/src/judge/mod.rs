//! Duplicate judges: decide whether a candidate code repeats something
//! already in the unique codebook.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{normalize_text, InitialCode, UniqueCumulativeCodebook};
use crate::error::{Error, Result};

mod pairwise;
mod table_gateway;
mod zero_shot;

pub use pairwise::PairwiseJudge;
pub use table_gateway::TableGateway;
pub use zero_shot::{build_list_prompt, parse_list_verdict, ZeroShotJudge};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub is_duplicate: bool,
    /// Which entry matched; only pairwise-style judges know this.
    pub matched_unique_index: Option<usize>,
    pub rationale: Option<String>,
    pub raw_response: String,
}

impl JudgeVerdict {
    pub fn unique(raw: impl Into<String>) -> Self {
        JudgeVerdict { is_duplicate: false, matched_unique_index: None, rationale: None, raw_response: raw.into() }
    }
}

pub trait DuplicateJudge {
    /// Short name used in output paths and reports.
    fn label(&self) -> String;

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict>;
}

impl<J: DuplicateJudge + ?Sized> DuplicateJudge for &J {
    fn label(&self) -> String {
        (**self).label()
    }

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
        (**self).judge(code, ucc)
    }
}

impl<J: DuplicateJudge + ?Sized> DuplicateJudge for Box<J> {
    fn label(&self) -> String {
        (**self).label()
    }

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
        (**self).judge(code, ucc)
    }
}

/// Offline judge driven by a pair predicate, scanning the codebook oldest first.
pub struct StubJudge<F> {
    name: String,
    similar: F,
}

impl<F> StubJudge<F>
where
    F: Fn(&InitialCode, &InitialCode) -> bool,
{
    /// `similar(unique_entry, candidate)` decides each pair.
    pub fn new(name: impl Into<String>, similar: F) -> Self {
        StubJudge { name: name.into(), similar }
    }
}

impl<F> DuplicateJudge for StubJudge<F>
where
    F: Fn(&InitialCode, &InitialCode) -> bool,
{
    fn label(&self) -> String {
        format!("stub-{}", self.name)
    }

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
        Ok(match ucc.entries.iter().position(|e| (self.similar)(&e.code, code)) {
            Some(i) => JudgeVerdict {
                is_duplicate: true,
                matched_unique_index: Some(i),
                rationale: None,
                raw_response: String::new(),
            },
            None => JudgeVerdict::unique(""),
        })
    }
}

pub type PredicateFn = fn(&InitialCode, &InitialCode) -> bool;

pub fn always_similar() -> StubJudge<PredicateFn> {
    StubJudge::new("always-similar", |_, _| true)
}

pub fn always_different() -> StubJudge<PredicateFn> {
    StubJudge::new("always-different", |_, _| false)
}

/// Symmetric set of "similar" pairs over normalized "Name. Description" texts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimilarityTable {
    pairs: HashSet<(String, String)>,
}

impl SimilarityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str) {
        let (a, b) = (normalize_text(a), normalize_text(b));
        self.pairs.insert((a.clone(), b.clone()));
        self.pairs.insert((b, a));
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&(normalize_text(a), normalize_text(b)))
    }

    pub fn codes_similar(&self, a: &InitialCode, b: &InitialCode) -> bool {
        self.contains(&a.judge_text(), &b.judge_text())
    }

    /// Normalized partners of `text`.
    pub fn partners<'a>(&'a self, text: &str) -> impl Iterator<Item = &'a str> + 'a {
        let key = normalize_text(text);
        self.pairs.iter().filter(move |(a, _)| *a == key).map(|(_, b)| b.as_str())
    }

    pub fn len(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// File layout: a JSON array of `[text_a, text_b]` pairs.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs: Vec<(String, String)> = serde_json::from_str(&text)?;
        let mut table = SimilarityTable::new();
        for (a, b) in &pairs {
            table.insert(a, b);
        }
        Ok(table)
    }

    pub fn into_judge(self) -> StubJudge<impl Fn(&InitialCode, &InitialCode) -> bool> {
        StubJudge::new("lookup", move |a, b| self.codes_similar(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ucc(names: &[&str]) -> UniqueCumulativeCodebook {
        let mut u = UniqueCumulativeCodebook::new();
        for n in names {
            u.append_unique(InitialCode::new(*n, "d", "").unwrap(), "i", 1);
        }
        u
    }

    #[test]
    fn stubs_behave_as_limits() {
        let u = ucc(&["A", "B"]);
        let x = InitialCode::new("X", "d", "").unwrap();
        let v = always_similar().judge(&x, &u).unwrap();
        assert_eq!((v.is_duplicate, v.matched_unique_index), (true, Some(0)));
        assert!(!always_different().judge(&x, &u).unwrap().is_duplicate);
    }

    #[test]
    fn table_is_symmetric_and_normalized() {
        let mut t = SimilarityTable::new();
        t.insert("B. d", "X.  D");
        assert!(t.contains("x. d", "b. d"));
        let judge = t.into_judge();
        let v = judge.judge(&InitialCode::new("X", "d", "").unwrap(), &ucc(&["A", "B"])).unwrap();
        assert_eq!(v.matched_unique_index, Some(1));
    }
}
