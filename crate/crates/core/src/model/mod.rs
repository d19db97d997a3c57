//! Vocabulary, tokenizer and next-token model interfaces.
//!
//! Every decoder in this crate talks to a model through [`ScoredModel`]
//! (a conditional next-token distribution) or, for the energy-based decoder,
//! through [`DifferentiableModel`], which additionally exposes its tied
//! embedding table and gradients with respect to soft output embeddings.

mod embedding_lm;
mod file;
mod matrix;
mod ngram;
mod tokenizer;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding_lm::{EmbeddingLm, SoftForward, DEFAULT_WINDOW};
pub use file::{LoadedModel, ModelFile, ModelFileError, ModelSpec, NgramCountsEntry, TokenizerSpec, ToyModel, MODEL_FORMAT};
pub use matrix::{EmbeddingTable, Matrix, SoftSequence};
pub(crate) use matrix::squared_distance;
pub use ngram::{ContextCounts, NgramModel};
pub use tokenizer::{Tokenizer, TokenizerMode, EOS_TOKEN};
pub use vocab::Vocabulary;

/// Index of a token in a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("token id {token} is out of range for vocabulary of size {vocab_size}")]
    InvalidToken { token: TokenId, vocab_size: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("completion must contain at least one token")]
    EmptyCompletion,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TokenizeError {
    #[error("text piece {piece:?} at byte {offset} is not in the vocabulary")]
    UnsupportedCharacter { piece: String, offset: usize },
    #[error("token id {0} is out of range")]
    InvalidToken(TokenId),
}

/// Probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    probs: Vec<f64>,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl NextTokenDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(ModelError::InvalidDistribution(format!("entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::InvalidDistribution(format!("sum {sum}")));
        }
        Ok(Self { probs })
    }

    /// Numerically stable softmax. `-inf` logits get probability zero.
    pub fn from_logits(logits: &[f64]) -> Result<Self, ModelError> {
        Self::from_probs(softmax(logits))
    }

    pub fn uniform(vocab_size: usize) -> Self {
        Self { probs: vec![1.0 / vocab_size as f64; vocab_size] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token.index()]
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        TokenId::from(best)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A conditional next-token model `P(y_n | x, y_{1:n-1})`.
///
/// Implementations are immutable after construction and must be
/// deterministic: the same context always yields the same distribution.
pub trait ScoredModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// End-of-sequence token, if the model has one.
    fn eos(&self) -> Option<TokenId>;

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError>;

    /// Log-probabilities of the next token. Models that compute in log space
    /// should override this to avoid a round trip through `exp`/`ln`.
    fn next_log_probs(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self.next_distribution(context)?.log_probs())
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), ModelError> {
        let vocab_size = self.vocab_size();
        match tokens.iter().find(|t| t.index() >= vocab_size) {
            Some(&token) => Err(ModelError::InvalidToken { token, vocab_size }),
            None => Ok(()),
        }
    }
}

impl<M: ScoredModel + ?Sized> ScoredModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos(&self) -> Option<TokenId> {
        (**self).eos()
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        (**self).next_distribution(context)
    }
    fn next_log_probs(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        (**self).next_log_probs(context)
    }
}

/// A model whose output layer shares its input embedding table, so that a
/// sequence of continuous embeddings can be scored and differentiated.
pub trait DifferentiableModel: ScoredModel {
    fn embeddings(&self) -> &EmbeddingTable;

    /// Log-probability of the soft sequence given the prompt, plus the
    /// next-token logits at every output position.
    fn soft_forward(&self, prompt: &[TokenId], soft: &SoftSequence) -> Result<SoftForward, ModelError>;

    /// Gradient of `-log P(soft | prompt)` with respect to every soft row.
    fn soft_gradient(&self, prompt: &[TokenId], soft: &SoftSequence) -> Result<Matrix, ModelError>;
}

/// Sum of `log P(y_n | prompt, y_{1:n-1})` over the completion.
pub fn sequence_logprob<M: ScoredModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    completion: &[TokenId],
) -> Result<f64, ModelError> {
    if completion.is_empty() {
        return Err(ModelError::EmptyCompletion);
    }
    model.check_tokens(prompt)?;
    model.check_tokens(completion)?;
    let mut context = prompt.to_vec();
    let mut total = 0.0;
    for &token in completion {
        total += model.next_log_probs(&context)?[token.index()];
        context.push(token);
    }
    Ok(total)
}

/// Every token equally likely regardless of context.
#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab_size: usize,
    eos: Option<TokenId>,
}

impl UniformModel {
    pub fn new(vocab_size: usize, eos: Option<TokenId>) -> Self {
        Self { vocab_size, eos }
    }
}

impl ScoredModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        self.check_tokens(context)?;
        Ok(NextTokenDistribution::uniform(self.vocab_size))
    }
}
