use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order in which interviews are analysed. `order[k]` is the 1-based corpus
/// ordinal of the interview coded at position `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSequence {
    pub name: String,
    pub order: Vec<usize>,
}

pub const SHUFFLE_A: [usize; 12] = [6, 10, 9, 4, 12, 11, 7, 8, 1, 2, 3, 5];
pub const SHUFFLE_B: [usize; 12] = [4, 2, 1, 11, 10, 7, 12, 9, 6, 3, 5, 8];

impl AnalysisSequence {
    pub fn new(name: impl Into<String>, order: Vec<usize>) -> Result<Self> {
        let seq = AnalysisSequence { name: name.into(), order };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order.len();
        if n == 0 {
            return Err(Error::Config(format!("sequence '{}' is empty", self.name)));
        }
        let mut seen = vec![false; n];
        for &p in &self.order {
            if p == 0 || p > n || std::mem::replace(&mut seen[p - 1], true) {
                return Err(Error::Config(format!(
                    "sequence '{}' is not a permutation of 1..={n}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        AnalysisSequence { name: "identity".into(), order: (1..=n).collect() }
    }

    pub fn reverse(n: usize) -> Self {
        AnalysisSequence { name: "reverse".into(), order: (1..=n).rev().collect() }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Identity, reverse and the two published shuffled orders for a 12-interview corpus.
pub fn builtin_sequences(n: usize) -> Result<Vec<AnalysisSequence>> {
    if n != 12 {
        return Err(Error::Config(format!("built-in sequences are defined for 12 interviews, not {n}")));
    }
    Ok(vec![
        AnalysisSequence::identity(12),
        AnalysisSequence::reverse(12),
        AnalysisSequence { name: "shuffle-a".into(), order: SHUFFLE_A.to_vec() },
        AnalysisSequence { name: "shuffle-b".into(), order: SHUFFLE_B.to_vec() },
    ])
}

/// Looks up a built-in by name; identity and reverse work for any `n`.
pub fn builtin_by_name(name: &str, n: usize) -> Result<AnalysisSequence> {
    match name {
        "identity" => Ok(AnalysisSequence::identity(n)),
        "reverse" => Ok(AnalysisSequence::reverse(n)),
        other => builtin_sequences(n)?
            .into_iter()
            .find(|s| s.name == other)
            .ok_or_else(|| Error::Config(format!("unknown built-in sequence '{other}'"))),
    }
}
