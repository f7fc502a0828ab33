use serde_json::Value;

use super::{DuplicateJudge, JudgeVerdict};
use crate::codebook::{InitialCode, UniqueCumulativeCodebook};
use crate::coder::extract_json_object;
use crate::error::{Error, Result};
use crate::gateway::{CompletionSettings, Gateway};

pub const VERDICT_KEY: &str = "value_in_combined_unique";

/// Whole-list prompt: does `value` resemble any element of the unique list?
pub fn build_list_prompt(value: &str, combined_unique: &[String]) -> String {
    format!(
        "Then, determine if value: ```{value}``` conveys a resembling idea or meaning \
         to any element in the list combined_unique: {}.\n\n\
         Your response should be either a string 'true' (Similar idea or meaning) or a string 'false' (no \
         similarity).\n\n\
         Format the response as a json file using the key {VERDICT_KEY}\n",
        combined_unique.join(", ")
    )
}

pub fn parse_list_verdict(raw: &str) -> Result<bool> {
    let obj = extract_json_object(raw).ok_or_else(|| Error::judge_contract("no JSON object in answer", raw))?;
    match obj.get(VERDICT_KEY) {
        Some(Value::Bool(b)) => Ok(*b),
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::judge_contract(format!("'{s}' is not true or false"), raw)),
        },
        _ => Err(Error::judge_contract(format!("answer lacks key {VERDICT_KEY}"), raw)),
    }
}

/// One gateway call per candidate, comparing it against the whole unique list.
pub struct ZeroShotJudge<G> {
    gateway: G,
    settings: CompletionSettings,
}

impl<G: Gateway> ZeroShotJudge<G> {
    pub fn new(gateway: G, settings: CompletionSettings) -> Self {
        ZeroShotJudge { gateway, settings }
    }
}

impl<G: Gateway> DuplicateJudge for ZeroShotJudge<G> {
    fn label(&self) -> String {
        "zero-shot".into()
    }

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
        if ucc.is_empty() {
            return Err(Error::Structural("zero-shot judge needs a non-empty codebook".into()));
        }
        let list: Vec<String> = ucc.entries.iter().map(|e| e.code.judge_text()).collect();
        let prompt = build_list_prompt(&code.judge_text(), &list);
        let resp = self.gateway.complete(&self.settings.request(prompt))?;
        let is_duplicate = parse_list_verdict(&resp.text)?;
        Ok(JudgeVerdict { is_duplicate, matched_unique_index: None, rationale: None, raw_response: resp.text })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;

    fn ucc() -> UniqueCumulativeCodebook {
        let mut u = UniqueCumulativeCodebook::new();
        u.append_unique(InitialCode::new("A", "alpha", "").unwrap(), "i", 1);
        u.append_unique(InitialCode::new("B", "beta", "").unwrap(), "i", 1);
        u
    }

    #[test]
    fn verdict_parsing() {
        assert!(parse_list_verdict(r#"{"value_in_combined_unique":"true"}"#).unwrap());
        assert!(!parse_list_verdict(r#"{"value_in_combined_unique":"false"}"#).unwrap());
        assert!(parse_list_verdict(r#"```json {"value_in_combined_unique": "TRUE"} ```"#).unwrap());
        assert!(!parse_list_verdict(r#"{"value_in_combined_unique": false}"#).unwrap());
        assert!(matches!(parse_list_verdict(r#"{"verdict":"yes"}"#), Err(Error::JudgeContract { .. })));
        assert!(parse_list_verdict(r#"{"value_in_combined_unique":"maybe"}"#).is_err());
    }

    #[test]
    fn prompt_joins_name_description_entries() {
        let p = build_list_prompt("X. x", &["A. alpha".into(), "B. beta".into()]);
        assert!(p.contains("value: ```X. x```"));
        assert!(p.contains("combined_unique: A. alpha, B. beta."));
    }

    #[test]
    fn one_call_per_candidate_and_no_index() {
        let g = ScriptedGateway::sequence([r#"{"value_in_combined_unique":"true"}"#]).unwrap();
        let judge = ZeroShotJudge::new(&g, CompletionSettings::new("m"));
        let v = judge.judge(&InitialCode::new("X", "x", "").unwrap(), &ucc()).unwrap();
        assert!(v.is_duplicate);
        assert_eq!(v.matched_unique_index, None);
        assert_eq!(g.calls(), 1);
    }
}
