//! JSON model files.
//!
//! ```json
//! {
//!   "format": "constrained-decoding-model/v1",
//!   "tokenizer": { "mode": "byte-level" | "whitespace", "tokens": ["..."], "eos": "<eos>" },
//!   "model": { "kind": "ngram", "order": 3, "smoothing": 1.0,
//!              "counts": [ { "context": [1, 2], "next": [[5, 3], [7, 1]] } ] }
//! }
//! ```
//!
//! or, for the differentiable model,
//!
//! ```json
//! "model": { "kind": "embedding-lm", "window": 4,
//!            "embeddings": [[...d reals...], ...V rows...],
//!            "hidden_weight": [[...d...], ...d rows...], "hidden_bias": [...d...] }
//! ```
//!
//! The byte-level tokenizer may omit `tokens`; it is then the standard 256
//! byte tokens plus `<eos>`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DifferentiableModel, EmbeddingLm, EmbeddingTable, Matrix, ModelError, NextTokenDistribution, NgramModel,
    ScoredModel, TokenId, Tokenizer, TokenizerMode, Vocabulary,
};

pub const MODEL_FORMAT: &str = "constrained-decoding-model/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub tokenizer: TokenizerSpec,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramCountsEntry {
    pub context: Vec<TokenId>,
    pub next: Vec<(TokenId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Ngram {
        order: usize,
        smoothing: f64,
        counts: Vec<NgramCountsEntry>,
    },
    EmbeddingLm {
        window: usize,
        embeddings: Vec<Vec<f64>>,
        hidden_weight: Vec<Vec<f64>>,
        hidden_bias: Vec<f64>,
    },
}

/// Either of the bundled toy models.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModel {
    Ngram(NgramModel),
    EmbeddingLm(EmbeddingLm),
}

impl ToyModel {
    pub fn as_differentiable(&self) -> Option<&EmbeddingLm> {
        match self {
            ToyModel::EmbeddingLm(m) => Some(m),
            ToyModel::Ngram(_) => None,
        }
    }
}

impl ScoredModel for ToyModel {
    fn vocab_size(&self) -> usize {
        match self {
            ToyModel::Ngram(m) => m.vocab_size(),
            ToyModel::EmbeddingLm(m) => m.vocab_size(),
        }
    }

    fn eos(&self) -> Option<TokenId> {
        match self {
            ToyModel::Ngram(m) => m.eos(),
            ToyModel::EmbeddingLm(m) => m.eos(),
        }
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        match self {
            ToyModel::Ngram(m) => m.next_distribution(context),
            ToyModel::EmbeddingLm(m) => m.next_distribution(context),
        }
    }

    fn next_log_probs(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        match self {
            ToyModel::Ngram(m) => m.next_log_probs(context),
            ToyModel::EmbeddingLm(m) => m.next_log_probs(context),
        }
    }
}

/// A tokenizer together with the model it was trained for.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub tokenizer: Tokenizer,
    pub model: ToyModel,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format {0:?}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl LoadedModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn from_file(file: ModelFile) -> Result<Self, ModelFileError> {
        if file.format != MODEL_FORMAT {
            return Err(ModelFileError::Format(file.format));
        }
        let tokenizer = match (file.tokenizer.mode, file.tokenizer.tokens.is_empty()) {
            (TokenizerMode::ByteLevel, true) => Tokenizer::byte_level(),
            (mode, _) => {
                let vocab = match &file.tokenizer.eos {
                    Some(eos) => Vocabulary::with_eos(file.tokenizer.tokens, eos)?,
                    None => Vocabulary::new(file.tokenizer.tokens)?,
                };
                Tokenizer::from_vocabulary(vocab, mode)?
            }
        };
        let vocab_size = tokenizer.vocabulary().len();
        let eos = tokenizer.eos();
        let model = match file.model {
            ModelSpec::Ngram { order, smoothing, counts } => {
                let mut m = NgramModel::empty(order, vocab_size, eos, smoothing)?;
                for entry in counts {
                    let next: BTreeMap<TokenId, u64> = entry.next.into_iter().collect();
                    m.insert_counts(entry.context, next)?;
                }
                ToyModel::Ngram(m)
            }
            ModelSpec::EmbeddingLm { window, embeddings, hidden_weight, hidden_bias } => {
                if embeddings.len() != vocab_size {
                    return Err(ModelError::DimensionMismatch { expected: vocab_size, actual: embeddings.len() }.into());
                }
                let table = EmbeddingTable::new(Matrix::from_rows(&embeddings)?)?;
                let w = Matrix::from_rows(&hidden_weight)?;
                ToyModel::EmbeddingLm(EmbeddingLm::new(table, w, hidden_bias, window, eos)?)
            }
        };
        Ok(Self { tokenizer, model })
    }

    pub fn to_file(&self) -> ModelFile {
        let tokenizer = TokenizerSpec {
            mode: self.tokenizer.mode(),
            tokens: self.tokenizer.vocabulary().tokens().to_vec(),
            eos: self.tokenizer.eos().and_then(|e| self.tokenizer.vocabulary().token(e)).map(str::to_string),
        };
        let model = match &self.model {
            ToyModel::Ngram(m) => ModelSpec::Ngram {
                order: m.order(),
                smoothing: m.smoothing(),
                counts: m
                    .counts()
                    .into_iter()
                    .map(|(ctx, c)| NgramCountsEntry {
                        context: ctx.to_vec(),
                        next: c.next.iter().map(|(&t, &n)| (t, n)).collect(),
                    })
                    .collect(),
            },
            ToyModel::EmbeddingLm(m) => ModelSpec::EmbeddingLm {
                window: m.window(),
                embeddings: m.embeddings().matrix().to_rows(),
                hidden_weight: m.hidden_weight().to_rows(),
                hidden_bias: m.hidden_bias().to_vec(),
            },
        };
        ModelFile { format: MODEL_FORMAT.to_string(), tokenizer, model }
    }

    /// An n-gram model trained on `corpus`, each text followed by
    /// end-of-sequence. Whitespace mode builds its vocabulary from the corpus.
    pub fn ngram_from_corpus(corpus: &[&str], mode: TokenizerMode, order: usize, smoothing: f64) -> Result<Self, ModelError> {
        let tokenizer = match mode {
            TokenizerMode::ByteLevel => Tokenizer::byte_level(),
            TokenizerMode::Whitespace => Tokenizer::whitespace_from_corpus(corpus.iter().copied())?,
        };
        let eos = tokenizer.eos();
        let sequences = corpus
            .iter()
            .map(|text| {
                let mut seq = tokenizer
                    .tokenize(text)
                    .map_err(|e| ModelError::InvalidVocabulary(e.to_string()))?;
                seq.extend(eos);
                Ok(seq)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let model = NgramModel::train(order, tokenizer.vocabulary().len(), eos, &sequences, smoothing)?;
        Ok(Self { tokenizer, model: ToyModel::Ngram(model) })
    }

    /// A randomly initialized embedding model over `tokenizer`'s vocabulary.
    pub fn random_embedding_lm(tokenizer: Tokenizer, dim: usize, window: usize, scale: f64, seed: u64) -> Self {
        let v = tokenizer.vocabulary().len();
        let model = EmbeddingLm::random(v, dim, window, tokenizer.eos(), scale, seed);
        Self { tokenizer, model: ToyModel::EmbeddingLm(model) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_file_round_trip() {
        let tokenizer = Tokenizer::byte_level();
        let seq = tokenizer.tokenize("abcabc").unwrap();
        let m = NgramModel::train(3, 257, tokenizer.eos(), &[seq], 1.0).unwrap();
        let loaded = LoadedModel { tokenizer, model: ToyModel::Ngram(m.clone()) };
        let json = serde_json::to_string(&loaded.to_file()).unwrap();
        let back = LoadedModel::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.model, ToyModel::Ngram(m));
    }

    #[test]
    fn rejects_wrong_embedding_shape() {
        let tokenizer = Tokenizer::whitespace_from_corpus(["a b"]).unwrap();
        let m = EmbeddingLm::random(3, 2, 2, tokenizer.eos(), 1.0, 0);
        let loaded = LoadedModel { tokenizer, model: ToyModel::EmbeddingLm(m) };
        let mut file = loaded.to_file();
        if let ModelSpec::EmbeddingLm { embeddings, .. } = &mut file.model {
            embeddings.pop();
        }
        assert!(matches!(
            LoadedModel::from_file(file.clone()),
            Err(ModelFileError::Model(ModelError::DimensionMismatch { .. }))
        ));
        if let ModelSpec::EmbeddingLm { embeddings, .. } = &mut file.model {
            embeddings.push(vec![0.0; 3]);
        }
        assert!(LoadedModel::from_file(file).is_err());
    }

    #[test]
    fn rejects_unknown_format() {
        let loaded = LoadedModel {
            tokenizer: Tokenizer::byte_level(),
            model: ToyModel::Ngram(NgramModel::empty(2, 257, None, 1.0).unwrap()),
        };
        let mut file = loaded.to_file();
        file.format = "other".into();
        assert!(matches!(LoadedModel::from_file(file), Err(ModelFileError::Format(_))));
    }
}
