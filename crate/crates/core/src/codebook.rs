//! Codes, per-interview code sets and the two cumulative codebooks.
//!
//! The total codebook (TCC) is the plain concatenation of every code in
//! analysis order. The unique codebook (UCC) is append-only: a code either
//! joins it or is logged as a duplicate of an entry already present.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Soft word-count targets requested from the model.
pub const NAME_WORD_TARGET: usize = 5;
pub const DESCRIPTION_WORD_TARGET: usize = 30;
pub const QUOTE_WORD_TARGET: usize = 40;

pub const CODES_HEADER: [&str; 5] = ["interview_id", "position", "name", "description", "quote"];
pub const DUPLICATES_HEADER: [&str; 6] = [
    "position",
    "name",
    "description",
    "matched_unique_name",
    "matched_unique_index",
    "rationale",
];

/// Rationale stored for duplicates caught before any judge call.
pub const EXACT_MATCH_RATIONALE: &str = "exact match";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InitialCode {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LengthWarning {
    Name { words: usize },
    Description { words: usize },
    Quote { words: usize },
    EmptyQuote,
}

impl std::fmt::Display for LengthWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LengthWarning::Name { words } => {
                write!(f, "name has {words} words (target {NAME_WORD_TARGET})")
            }
            LengthWarning::Description { words } => {
                write!(f, "description has {words} words (target {DESCRIPTION_WORD_TARGET})")
            }
            LengthWarning::Quote { words } => {
                write!(f, "quote has {words} words (target {QUOTE_WORD_TARGET})")
            }
            LengthWarning::EmptyQuote => f.write_str("quote is empty"),
        }
    }
}

impl InitialCode {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        quote: impl Into<String>,
    ) -> Result<Self> {
        let code = InitialCode {
            name: name.into(),
            description: description.into(),
            quote: quote.into(),
        };
        code.validate()?;
        Ok(code)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Input("code name is empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(Error::Input(format!("code '{}' has an empty description", self.name)));
        }
        Ok(())
    }

    /// The "Name. Description" text shown to judges and embedders. Quotes never take part.
    pub fn judge_text(&self) -> String {
        format!("{}. {}", self.name.trim(), self.description.trim())
    }

    /// Lowercased, whitespace-collapsed identity used for exact-match detection.
    pub fn identity_key(&self) -> String {
        normalize_text(&self.judge_text())
    }

    pub fn length_warnings(&self) -> Vec<LengthWarning> {
        let mut out = Vec::new();
        let words = |s: &str| s.split_whitespace().count();
        let n = words(&self.name);
        if n > NAME_WORD_TARGET {
            out.push(LengthWarning::Name { words: n });
        }
        let d = words(&self.description);
        if d > DESCRIPTION_WORD_TARGET {
            out.push(LengthWarning::Description { words: d });
        }
        let q = words(&self.quote);
        if q == 0 {
            out.push(LengthWarning::EmptyQuote);
        } else if q > QUOTE_WORD_TARGET {
            out.push(LengthWarning::Quote { words: q });
        }
        out
    }
}

pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewCodeSet {
    pub interview_id: String,
    /// 1-based ordinal within the analysis sequence.
    pub position: usize,
    pub codes: Vec<InitialCode>,
}

impl InterviewCodeSet {
    pub fn new(interview_id: impl Into<String>, position: usize, codes: Vec<InitialCode>) -> Result<Self> {
        let set = InterviewCodeSet { interview_id: interview_id.into(), position, codes };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.position == 0 {
            return Err(Error::Input("positions are 1-based".into()));
        }
        if self.codes.is_empty() {
            return Err(Error::Input(format!(
                "interview {} at position {} has no codes",
                self.interview_id, self.position
            )));
        }
        self.codes.iter().try_for_each(InitialCode::validate)
    }
}

/// Checks that sets are ordered by strictly increasing, unique positions.
pub fn validate_run(sets: &[InterviewCodeSet]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::Input("no code sets".into()));
    }
    for set in sets {
        set.validate()?;
    }
    for pair in sets.windows(2) {
        if pair[1].position <= pair[0].position {
            return Err(Error::Input(format!(
                "code sets out of order or repeated: position {} follows {}",
                pair[1].position, pair[0].position
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub code: InitialCode,
    pub interview_id: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TotalCumulativeCodebook {
    pub entries: Vec<CodebookEntry>,
    /// Running count after each position, in analysis order.
    pub cumulative_total_at: Vec<usize>,
}

impl TotalCumulativeCodebook {
    pub fn from_sets(sets: &[InterviewCodeSet]) -> Self {
        let mut tcc = TotalCumulativeCodebook::default();
        for set in sets {
            tcc.entries.extend(set.codes.iter().map(|code| CodebookEntry {
                code: code.clone(),
                interview_id: set.interview_id.clone(),
                position: set.position,
            }));
            tcc.cumulative_total_at.push(tcc.entries.len());
        }
        tcc
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchSource {
    ExactMatch,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateRecord {
    pub duplicate: InitialCode,
    pub interview_id: String,
    pub position: usize,
    /// Index into the UCC at match time; absent when the judge does not say which entry matched.
    pub matched_unique_index: Option<usize>,
    pub rationale: Option<String>,
    pub via: MatchSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UniqueCumulativeCodebook {
    pub entries: Vec<CodebookEntry>,
    pub duplicates: Vec<DuplicateRecord>,
    pub cumulative_unique_at: Vec<usize>,
}

impl UniqueCumulativeCodebook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append_unique(&mut self, code: InitialCode, interview_id: &str, position: usize) {
        self.entries.push(CodebookEntry {
            code,
            interview_id: interview_id.to_string(),
            position,
        });
    }

    pub fn record_duplicate(
        &mut self,
        code: InitialCode,
        interview_id: &str,
        position: usize,
        matched_index: Option<usize>,
        rationale: Option<String>,
        via: MatchSource,
    ) -> Result<()> {
        if let Some(idx) = matched_index {
            if idx >= self.entries.len() {
                return Err(Error::Structural(format!(
                    "duplicate matched index {idx} but the codebook holds {} entries",
                    self.entries.len()
                )));
            }
        }
        self.duplicates.push(DuplicateRecord {
            duplicate: code,
            interview_id: interview_id.to_string(),
            position,
            matched_unique_index: matched_index,
            rationale,
            via,
        });
        Ok(())
    }

    /// Marks the end of a position and records the running unique count.
    pub fn close_position(&mut self) {
        self.cumulative_unique_at.push(self.entries.len());
    }

    pub fn find_identical(&self, code: &InitialCode) -> Option<usize> {
        let key = code.identity_key();
        self.entries.iter().position(|e| e.code.identity_key() == key)
    }

    pub fn processed(&self) -> usize {
        self.entries.len() + self.duplicates.len()
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_entries_csv<W: Write>(w: W, entries: &[CodebookEntry]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(CODES_HEADER)?;
    for e in entries {
        wtr.write_record([
            e.interview_id.as_str(),
            &e.position.to_string(),
            &e.code.name,
            &e.code.description,
            &e.code.quote,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_code_set_csv<W: Write>(w: W, set: &InterviewCodeSet) -> Result<()> {
    let entries: Vec<CodebookEntry> = set
        .codes
        .iter()
        .map(|c| CodebookEntry {
            code: c.clone(),
            interview_id: set.interview_id.clone(),
            position: set.position,
        })
        .collect();
    write_entries_csv(w, &entries)
}

pub fn write_duplicates_csv<W: Write>(w: W, ucc: &UniqueCumulativeCodebook) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(DUPLICATES_HEADER)?;
    for d in &ucc.duplicates {
        let (name, index) = match d.matched_unique_index {
            Some(i) => (ucc.entries[i].code.name.clone(), i.to_string()),
            None => (String::new(), String::new()),
        };
        wtr.write_record([
            d.position.to_string().as_str(),
            &d.duplicate.name,
            &d.duplicate.description,
            &name,
            &index,
            d.rationale.as_deref().unwrap_or(""),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CodeRow {
    interview_id: String,
    position: usize,
    name: String,
    description: String,
    #[serde(default)]
    quote: String,
}

/// Reads a codes-schema CSV (per-interview codes or a UCC export).
pub fn read_entries_csv<R: Read>(r: R) -> Result<Vec<CodebookEntry>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CodeRow>() {
        let row = row?;
        let code = InitialCode::new(row.name, row.description, row.quote)?;
        out.push(CodebookEntry { code, interview_id: row.interview_id, position: row.position });
    }
    Ok(out)
}

pub fn read_entries_file(path: &Path) -> Result<Vec<CodebookEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_entries_csv(f)
}

/// Groups codes-schema rows into sets keyed by position, sorted by position.
pub fn group_into_sets(entries: Vec<CodebookEntry>) -> Result<Vec<InterviewCodeSet>> {
    let mut sets: Vec<InterviewCodeSet> = Vec::new();
    let mut sorted = entries;
    sorted.sort_by_key(|e| e.position);
    for e in sorted {
        match sets.last_mut() {
            Some(set) if set.position == e.position => {
                if set.interview_id != e.interview_id {
                    return Err(Error::Input(format!(
                        "position {} holds codes from interviews {} and {}",
                        e.position, set.interview_id, e.interview_id
                    )));
                }
                set.codes.push(e.code);
            }
            _ => sets.push(InterviewCodeSet {
                interview_id: e.interview_id,
                position: e.position,
                codes: vec![e.code],
            }),
        }
    }
    validate_run(&sets)?;
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(name: &str) -> InitialCode {
        InitialCode::new(name, format!("about {name}"), "q").unwrap()
    }

    #[test]
    fn rejects_blank_name_and_description() {
        assert!(InitialCode::new("  ", "d", "").is_err());
        assert!(InitialCode::new("A", " ", "").is_err());
        assert!(InitialCode::new("A", "d", "").is_ok());
    }

    #[test]
    fn empty_quote_is_a_warning_only() {
        let c = InitialCode::new("A", "d", "").unwrap();
        assert_eq!(c.length_warnings(), vec![LengthWarning::EmptyQuote]);
    }

    #[test]
    fn long_fields_warn() {
        let c = InitialCode::new("one two three four five six", "d", "q").unwrap();
        assert_eq!(c.length_warnings(), vec![LengthWarning::Name { words: 6 }]);
    }

    #[test]
    fn append_seeds_and_grows() {
        let mut ucc = UniqueCumulativeCodebook::new();
        ucc.append_unique(code("C1"), "i1", 1);
        assert_eq!(ucc.len(), 1);
        for i in 2..=17 {
            ucc.append_unique(code(&format!("C{i}")), "i1", 1);
        }
        let before = ucc.entries.clone();
        ucc.append_unique(code("novel"), "i2", 2);
        assert_eq!(ucc.len(), 18);
        assert_eq!(&ucc.entries[..17], &before[..]);
    }

    #[test]
    fn duplicates_keep_order_and_leave_entries_alone() {
        let mut ucc = UniqueCumulativeCodebook::new();
        ucc.append_unique(code("A"), "i1", 1);
        ucc.append_unique(code("B"), "i1", 1);
        let entries = ucc.entries.clone();
        ucc.record_duplicate(code("A2"), "i2", 2, Some(0), None, MatchSource::Judge).unwrap();
        ucc.record_duplicate(code("B2"), "i2", 2, Some(1), None, MatchSource::Judge).unwrap();
        assert_eq!(ucc.entries, entries);
        let idx: Vec<_> = ucc.duplicates.iter().map(|d| d.matched_unique_index).collect();
        assert_eq!(idx, vec![Some(0), Some(1)]);
    }

    #[test]
    fn out_of_range_match_is_structural() {
        let mut ucc = UniqueCumulativeCodebook::new();
        ucc.append_unique(code("A"), "i1", 1);
        let err = ucc
            .record_duplicate(code("X"), "i2", 2, Some(1), None, MatchSource::Judge)
            .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn identity_ignores_case_and_spacing_but_not_quote() {
        let a = InitialCode::new("Trust  in Data", "Views on   data", "one").unwrap();
        let b = InitialCode::new("trust in data", "views on data", "two").unwrap();
        assert_eq!(a.identity_key(), b.identity_key());
    }

    #[test]
    fn codes_csv_round_trip_with_commas_and_quotes() {
        let set = InterviewCodeSet::new(
            "int-03",
            3,
            vec![InitialCode::new("Costs, delays", "He said \"slow\"", "well, yes").unwrap()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_code_set_csv(&mut buf, &set).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("interview_id,position,name,description,quote\n"));
        let back = group_into_sets(read_entries_csv(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, vec![set]);
    }

    #[test]
    fn tcc_counts_are_running_totals() {
        let sets = vec![
            InterviewCodeSet::new("a", 1, vec![code("x"), code("y")]).unwrap(),
            InterviewCodeSet::new("b", 2, vec![code("z")]).unwrap(),
        ];
        let tcc = TotalCumulativeCodebook::from_sets(&sets);
        assert_eq!(tcc.cumulative_total_at, vec![2, 3]);
        assert_eq!(tcc.entries[2].position, 2);
    }
}
