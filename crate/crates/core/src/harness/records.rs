use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    C,
    Cpp,
    Python,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub language_tag: LanguageTag,
    pub prompt_text: String,
    pub cwe_tag: String,
}

/// A prompt with its constraint phrases (templates already instantiated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub prompt_id: String,
    pub language_tag: LanguageTag,
    pub prompt_text: String,
    pub cwe_tag: String,
    #[serde(default)]
    pub positives: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
}

impl BenchmarkEntry {
    pub fn has_constraints(&self) -> bool {
        !self.positives.is_empty() || !self.negatives.is_empty()
    }

    /// Text-level check against this prompt's phrases.
    pub fn satisfied_by(&self, text: &str) -> bool {
        self.positives.iter().all(|p| text.contains(p.as_str())) && !self.negatives.iter().any(|n| text.contains(n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub prompt_id: String,
    pub seed: u64,
    pub sample_index: usize,
    pub decoder_name: String,
    pub completion_text: String,
    pub constraint_satisfied: bool,
    /// Outputs drawn for this (prompt, seed) group.
    pub attempts_used: usize,
}

impl GenerationRecord {
    pub fn key(&self) -> SampleKey {
        SampleKey {
            prompt_id: self.prompt_id.clone(),
            seed: self.seed,
            sample_index: self.sample_index,
            decoder_name: Some(self.decoder_name.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub prompt_id: String,
    pub seed: u64,
    pub sample_index: usize,
    /// Needed only when one generation file mixes decoders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_name: Option<String>,
    pub parsed: bool,
    pub passed_tests: bool,
    pub analyzer_verdicts: BTreeMap<String, Verdict>,
}

impl LabelRecord {
    pub fn key(&self) -> SampleKey {
        SampleKey {
            prompt_id: self.prompt_id.clone(),
            seed: self.seed,
            sample_index: self.sample_index,
            decoder_name: self.decoder_name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    pub prompt_id: String,
    pub seed: u64,
    pub sample_index: usize,
    pub decoder_name: Option<String>,
}

impl SampleKey {
    pub(crate) fn without_decoder(&self) -> Self {
        Self { decoder_name: None, ..self.clone() }
    }
}

impl std::fmt::Display for SampleKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(d) = &self.decoder_name {
            write!(f, "{d}:")?;
        }
        write!(f, "{}/{}/{}", self.prompt_id, self.seed, self.sample_index)
    }
}

/// A prompt/seed pair whose decoding failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub prompt_id: String,
    pub seed: u64,
    pub message: String,
}
