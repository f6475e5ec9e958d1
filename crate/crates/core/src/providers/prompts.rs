//! Prompt templates sent alongside remote requests. Placeholders are written
//! `{name}` and substituted verbatim.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub extract: String,
    pub filter_entities: String,
    pub filter_relations: String,
    pub type_weights: String,
    pub judge_pair: String,
    pub summarize: String,
    pub synthesize: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            extract: "Extract the contextual keywords and the entity types the answer is likely to involve.\nQuestion: {query}".into(),
            filter_entities: "Question: {query}\nKeywords: {keywords}\nFor each keyword, keep only the candidate entities relevant to the question.\n{candidates}".into(),
            filter_relations: "Question: {query}\nKeep only the relation types useful for answering.\nCandidates: {types}".into(),
            type_weights: "Rate how informative each relation type is for question answering, from 0 to 1.\nTypes: {types}".into(),
            judge_pair: "Question: {query}\nDo these two entities share a hidden relation (similar_to, related_method, related_task)?\nA: {left}\nB: {right}".into(),
            summarize: "Question: {query}\nSummarize the shared theme of this group of papers and answer the question from it.\n{verbalization}".into(),
            synthesize: "Question: {query}\nCombine these community-level answers into one comprehensive answer.\n{answers}".into(),
        }
    }
}

impl PromptTemplates {
    /// Loads templates from a TOML file; keys absent from the file keep
    /// their defaults.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
