use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConstraintError, ConstraintSet, PhraseConstraint, Polarity, TemplateConstraint};
use crate::model::Tokenizer;

/// One line of a constraints file.
///
/// ```json
/// {"prompt_id": "cwe-787-0-c", "positives": [" snprintf"], "negatives": [" sprintf"],
///  "templates": [{"text": " if ({i} >= 0 && {i} < {size})", "bindings": {"i": "idx", "size": "n"}}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRecord {
    pub prompt_id: String,
    #[serde(default)]
    pub positives: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
    #[serde(default)]
    pub templates: Vec<TemplateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateRecord {
    pub text: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    #[serde(default)]
    pub polarity: Polarity,
}

impl ConstraintRecord {
    /// Phrase texts with every template instantiated: `(positives, negatives)`.
    pub fn phrase_texts(&self) -> Result<(Vec<String>, Vec<String>), ConstraintError> {
        let mut positives = self.positives.clone();
        let mut negatives = self.negatives.clone();
        for t in &self.templates {
            let text = TemplateConstraint::new(t.text.clone(), t.bindings.clone()).render()?;
            match t.polarity {
                Polarity::Positive => positives.push(text),
                Polarity::Negative => negatives.push(text),
            }
        }
        if positives.iter().chain(&negatives).any(String::is_empty) {
            return Err(ConstraintError::EmptyPhrase);
        }
        Ok((positives, negatives))
    }

    pub fn to_set(&self, tokenizer: &Tokenizer) -> Result<ConstraintSet, ConstraintError> {
        let (positives, negatives) = self.phrase_texts()?;
        let build = |texts: Vec<String>, polarity| -> Result<Vec<PhraseConstraint>, ConstraintError> {
            texts.into_iter().map(|t| PhraseConstraint::new(t, polarity, tokenizer)).collect()
        };
        ConstraintSet::new(build(positives, Polarity::Positive)?, build(negatives, Polarity::Negative)?)
    }
}
