//! Autoregressive decoders: greedy, beam search, nucleus sampling, beam
//! sampling and constrained beam sampling.
//!
//! All decoders grow completions left to right over a [`ScoredModel`].
//! A completion ends when the model's end-of-sequence token is emitted (the
//! token is kept in the returned sequence) or when `max_new_tokens` tokens
//! have been generated. Stochastic decoders are pure functions of their
//! inputs and `rng_seed`.

mod constrained;
mod nucleus;
mod sampling;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, TokenId, TokenizeError};

pub use constrained::{
    constrained_beam_sample, constrained_beam_sample_traced, sample_until_satisfied, CandidateTrace,
    ConstrainedOutput, StepTrace,
};
pub use nucleus::{apply_temperature, nucleus_filter, nucleus_sample, nucleus_support};
pub use sampling::{beam_sample, sample_successors, Successor};
pub use search::{beam_search, greedy_decode};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("invalid decoder configuration: {0}")]
    InvalidConfig(String),
    #[error("no output satisfied the constraints after {attempts} attempts")]
    NoConstrainedOutput { attempts: usize },
}

/// Settings shared by the autoregressive decoders.
///
/// Temperature and `top_p` apply to nucleus sampling only; beam search and
/// the beam samplers score with the model's own distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_width: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub rng_seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { beam_width: 25, top_p: 0.95, temperature: 0.4, max_new_tokens: 64, rng_seed: 0 }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_width == 0 {
            return Err(DecodeError::InvalidConfig("beam_width must be >= 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DecodeError::InvalidConfig(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if self.max_new_tokens == 0 {
            return Err(DecodeError::InvalidConfig("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self.clone() }
    }
}

/// A finished hypothesis from one of the beam decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub cum_logprob: f64,
}

/// Partial output during left-to-right decoding.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Beam {
    pub tokens: Vec<TokenId>,
    pub cum_logprob: f64,
    pub finished: bool,
}

impl Beam {
    pub fn root() -> Self {
        Self { tokens: Vec::new(), cum_logprob: 0.0, finished: false }
    }

    /// Appends `token`; the beam finishes on end-of-sequence or at the length cap.
    pub fn extend(&self, token: TokenId, logprob: f64, eos: Option<TokenId>, max_new_tokens: usize) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(token);
        let finished = Some(token) == eos || tokens.len() >= max_new_tokens;
        Self { tokens, cum_logprob: self.cum_logprob + logprob, finished }
    }

    pub fn context(&self, prompt: &[TokenId]) -> Vec<TokenId> {
        let mut ctx = Vec::with_capacity(prompt.len() + self.tokens.len());
        ctx.extend_from_slice(prompt);
        ctx.extend_from_slice(&self.tokens);
        ctx
    }

    pub fn into_hypothesis(self) -> Hypothesis {
        Hypothesis { tokens: self.tokens, cum_logprob: self.cum_logprob }
    }
}

/// Orders by descending score, then lexicographically by token sequence
/// (which puts lower token ids and shorter sequences first).
pub(crate) fn score_order(a_score: f64, a_tokens: &[TokenId], b_score: f64, b_tokens: &[TokenId]) -> std::cmp::Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = DecoderConfig::default();
        assert_eq!(c.temperature, 0.4);
        assert_eq!(c.top_p, 0.95);
        assert_eq!(c.beam_width, 25);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            DecoderConfig { beam_width: 0, ..Default::default() },
            DecoderConfig { top_p: 0.0, ..Default::default() },
            DecoderConfig { top_p: 1.5, ..Default::default() },
            DecoderConfig { temperature: 0.0, ..Default::default() },
            DecoderConfig { max_new_tokens: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
