use super::{DuplicateJudge, JudgeVerdict};
use crate::codebook::{InitialCode, UniqueCumulativeCodebook};
use crate::error::Result;
use crate::gateway::{CompletionSettings, Gateway};
use crate::program::{parse_meaning, render_pair_prompt, CompiledJudgePrompt, Meaning};

/// Compares the candidate with each unique entry in insertion order and stops
/// at the first "similar" answer.
pub struct PairwiseJudge<G> {
    gateway: G,
    settings: CompletionSettings,
    compiled: CompiledJudgePrompt,
}

impl<G: Gateway> PairwiseJudge<G> {
    pub fn new(gateway: G, settings: CompletionSettings, compiled: CompiledJudgePrompt) -> Self {
        PairwiseJudge { gateway, settings, compiled }
    }

    pub fn compiled(&self) -> &CompiledJudgePrompt {
        &self.compiled
    }
}

fn rationale_of(raw: &str) -> Option<String> {
    let head = raw.rfind("Meaning:").map(|i| &raw[..i]).unwrap_or("").trim();
    (!head.is_empty()).then(|| head.to_string())
}

impl<G: Gateway> DuplicateJudge for PairwiseJudge<G> {
    fn label(&self) -> String {
        "compiled".into()
    }

    fn judge(&self, code: &InitialCode, ucc: &UniqueCumulativeCodebook) -> Result<JudgeVerdict> {
        let candidate = code.judge_text();
        let mut last = String::new();
        for (i, entry) in ucc.entries.iter().enumerate() {
            let prompt = render_pair_prompt(&self.compiled, &entry.code.judge_text(), &candidate);
            let resp = self.gateway.complete(&self.settings.request(prompt))?;
            if parse_meaning(&resp.text)? == Meaning::Similar {
                return Ok(JudgeVerdict {
                    is_duplicate: true,
                    matched_unique_index: Some(i),
                    rationale: rationale_of(&resp.text),
                    raw_response: resp.text,
                });
            }
            last = resp.text;
        }
        Ok(JudgeVerdict::unique(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;
    use crate::program::{DIFFERENT_PHRASE, SIMILAR_PHRASE};

    fn ucc() -> UniqueCumulativeCodebook {
        let mut u = UniqueCumulativeCodebook::new();
        u.append_unique(InitialCode::new("A", "alpha", "").unwrap(), "i", 1);
        u.append_unique(InitialCode::new("B", "beta", "").unwrap(), "i", 1);
        u
    }

    fn x() -> InitialCode {
        InitialCode::new("X", "x", "").unwrap()
    }

    #[test]
    fn early_exit_on_first_similar() {
        let g = ScriptedGateway::sequence([format!("Meaning: {SIMILAR_PHRASE}"), format!("Meaning: {DIFFERENT_PHRASE}")])
            .unwrap();
        let judge = PairwiseJudge::new(&g, CompletionSettings::new("m"), CompiledJudgePrompt::new(vec![]));
        let v = judge.judge(&x(), &ucc()).unwrap();
        assert_eq!((v.is_duplicate, v.matched_unique_index), (true, Some(0)));
        assert_eq!(g.calls(), 1);
    }

    #[test]
    fn exhausts_list_when_all_different() {
        let g = ScriptedGateway::sequence([format!("Meaning: {DIFFERENT_PHRASE}"), format!("Meaning: {DIFFERENT_PHRASE}")])
            .unwrap();
        let judge = PairwiseJudge::new(&g, CompletionSettings::new("m"), CompiledJudgePrompt::new(vec![]));
        let v = judge.judge(&x(), &ucc()).unwrap();
        assert!(!v.is_duplicate && v.matched_unique_index.is_none());
        assert_eq!(g.calls(), 2);
    }

    #[test]
    fn unique_entry_is_text_1() {
        let g = ScriptedGateway::sequence([format!("Meaning: {SIMILAR_PHRASE}")]).unwrap();
        let judge = PairwiseJudge::new(&g, CompletionSettings::new("m"), CompiledJudgePrompt::new(vec![]));
        judge.judge(&x(), &ucc()).unwrap();
        let expected = render_pair_prompt(&CompiledJudgePrompt::new(vec![]), "A. alpha", "X. x");
        assert_eq!(g.transcript()[0].digest, crate::gateway::prompt_digest(&expected));
    }

    #[test]
    fn contract_violation_propagates() {
        let g = ScriptedGateway::sequence(["they are alike"]).unwrap();
        let judge = PairwiseJudge::new(&g, CompletionSettings::new("m"), CompiledJudgePrompt::new(vec![]));
        assert!(matches!(judge.judge(&x(), &ucc()), Err(crate::Error::JudgeContract { .. })));
    }
}
