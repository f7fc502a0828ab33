use super::SimilarityTable;
use crate::codebook::normalize_text;
use crate::gateway::{BackendTag, CompletionRequest, CompletionResponse, Gateway, GatewayError};
use crate::program::{extract_query_pair, Meaning};

/// Offline model that answers judge prompts from a [`SimilarityTable`].
///
/// Pair and teacher prompts get a short rationale followed by a `Meaning:`
/// line; whole-list prompts get the JSON verdict. Anything else is a
/// content error.
#[derive(Debug, Clone)]
pub struct TableGateway {
    table: SimilarityTable,
    invert: bool,
}

impl TableGateway {
    pub fn new(table: SimilarityTable) -> Self {
        TableGateway { table, invert: false }
    }

    /// Always answers the opposite of the table.
    pub fn inverted(table: SimilarityTable) -> Self {
        TableGateway { table, invert: true }
    }

    pub fn table(&self) -> &SimilarityTable {
        &self.table
    }

    fn pair_answer(&self, text_1: &str, text_2: &str) -> String {
        let meaning = match self.table.contains(text_1, text_2) != self.invert {
            true => Meaning::Similar,
            false => Meaning::Different,
        };
        format!(
            " produce the meaning. We compare what each text describes and decide whether they name the same idea.\n\nMeaning: {}",
            meaning.phrase()
        )
    }

    fn list_answer(&self, prompt: &str) -> Option<String> {
        let start = prompt.find("value: ```")? + "value: ```".len();
        let end = start + prompt[start..].find("```")?;
        let value = &prompt[start..end];
        let list_start = prompt.find("combined_unique: ")? + "combined_unique: ".len();
        let list_end = list_start + prompt[list_start..].find(".\n\nYour response")?;
        let list = normalize_text(&prompt[list_start..list_end]);
        let hit = self.table.partners(value).any(|p| list.contains(p));
        Some(format!("{{\"value_in_combined_unique\": \"{}\"}}", hit != self.invert))
    }
}

impl Gateway for TableGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let prompt = &request.prompt;
        let text = if prompt.contains("value_in_combined_unique") {
            self.list_answer(prompt)
        } else {
            extract_query_pair(prompt).map(|(a, b)| self.pair_answer(&a, &b))
        };
        let text = text.ok_or_else(|| GatewayError::Content("prompt is not a judge prompt".into()))?;
        Ok(CompletionResponse { text, usage: None, backend_tag: BackendTag::Scripted })
    }
}
