//! Positive and negative key-phrase constraints.
//!
//! Enforcement during decoding works on token sequences ([`ConstraintProgress`],
//! [`blocked_tokens`]); the final verdict is taken on text ([`satisfied`]),
//! because a phrase may be realized by more than one tokenization.

mod file;
mod template;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TokenId, TokenizeError, Tokenizer};

pub use file::{ConstraintRecord, TemplateRecord};
pub use template::TemplateConstraint;

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("key phrase must not be empty")]
    EmptyPhrase,
    #[error("template hole {{{0}}} has no binding")]
    UnboundHole(String),
    #[error("phrase {phrase:?} cannot be tokenized: {source}")]
    Tokenize { phrase: String, source: TokenizeError },
    #[error("phrase {0:?} does not survive a tokenize/detokenize round trip")]
    RoundTrip(String),
    #[error("{polarity:?} phrase {phrase:?} placed in the wrong list")]
    PolarityMismatch { phrase: String, polarity: Polarity },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

/// A key phrase that must (positive) or must not (negative) appear.
/// Leading whitespace is significant.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseConstraint {
    text: String,
    polarity: Polarity,
    tokens: Vec<TokenId>,
    // KMP failure function over `tokens`
    failure: Vec<usize>,
}

fn failure_function(tokens: &[TokenId]) -> Vec<usize> {
    let mut fail = vec![0; tokens.len()];
    let mut k = 0;
    for i in 1..tokens.len() {
        while k > 0 && tokens[i] != tokens[k] {
            k = fail[k - 1];
        }
        if tokens[i] == tokens[k] {
            k += 1;
        }
        fail[i] = k;
    }
    fail
}

impl PhraseConstraint {
    pub fn new(text: impl Into<String>, polarity: Polarity, tokenizer: &Tokenizer) -> Result<Self, ConstraintError> {
        let text = text.into();
        if text.is_empty() {
            return Err(ConstraintError::EmptyPhrase);
        }
        let tokens = tokenizer
            .tokenize(&text)
            .map_err(|source| ConstraintError::Tokenize { phrase: text.clone(), source })?;
        if tokenizer.detokenize(&tokens).ok().as_deref() != Some(text.as_str()) {
            return Err(ConstraintError::RoundTrip(text));
        }
        Ok(Self::from_tokens(text, polarity, tokens))
    }

    /// Builds a phrase from an explicit token form, bypassing the tokenizer.
    pub fn from_tokens(text: impl Into<String>, polarity: Polarity, tokens: Vec<TokenId>) -> Self {
        let failure = failure_function(&tokens);
        Self { text: text.into(), polarity, tokens, failure }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Next matched-prefix length after reading `token` with `matched`
    /// tokens already matched.
    fn step(&self, mut matched: usize, token: TokenId) -> usize {
        if matched == self.tokens.len() {
            matched = self.failure[matched - 1];
        }
        while matched > 0 && self.tokens[matched] != token {
            matched = self.failure[matched - 1];
        }
        if self.tokens[matched] == token {
            matched + 1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    positives: Vec<PhraseConstraint>,
    negatives: Vec<PhraseConstraint>,
}

impl ConstraintSet {
    pub fn new(positives: Vec<PhraseConstraint>, negatives: Vec<PhraseConstraint>) -> Result<Self, ConstraintError> {
        let wrong = positives
            .iter()
            .find(|p| p.polarity != Polarity::Positive)
            .or_else(|| negatives.iter().find(|p| p.polarity != Polarity::Negative));
        if let Some(p) = wrong {
            return Err(ConstraintError::PolarityMismatch { phrase: p.text.clone(), polarity: p.polarity });
        }
        Ok(Self { positives, negatives })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Tokenizes every phrase text with `tokenizer`.
    pub fn from_texts<S: AsRef<str>>(
        positives: &[S],
        negatives: &[S],
        tokenizer: &Tokenizer,
    ) -> Result<Self, ConstraintError> {
        let build = |texts: &[S], polarity| -> Result<Vec<_>, ConstraintError> {
            texts.iter().map(|t| PhraseConstraint::new(t.as_ref(), polarity, tokenizer)).collect()
        };
        Self::new(build(positives, Polarity::Positive)?, build(negatives, Polarity::Negative)?)
    }

    pub fn positives(&self) -> &[PhraseConstraint] {
        &self.positives
    }

    pub fn negatives(&self) -> &[PhraseConstraint] {
        &self.negatives
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// Positives followed by negatives.
    pub fn iter(&self) -> impl Iterator<Item = &PhraseConstraint> {
        self.positives.iter().chain(&self.negatives)
    }
}

/// Per-beam matching state for the positive phrases of a [`ConstraintSet`].
///
/// `bank_index` counts positive-phrase tokens consumed: the full length of
/// every satisfied phrase plus the furthest partial match reached for every
/// unsatisfied one. It never decreases.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintProgress {
    matched: Vec<usize>,
    satisfied: Vec<bool>,
    consumed: Vec<usize>,
    bank_index: usize,
}

impl ConstraintProgress {
    pub fn new(constraints: &ConstraintSet) -> Self {
        let n = constraints.positives.len();
        Self { matched: vec![0; n], satisfied: vec![false; n], consumed: vec![0; n], bank_index: 0 }
    }

    /// Progress after reading every token in `tokens`.
    pub fn from_tokens(constraints: &ConstraintSet, tokens: &[TokenId]) -> Self {
        tokens
            .iter()
            .fold(Self::new(constraints), |p, &t| p.advance(constraints, t))
    }

    pub fn matched_prefix_len(&self) -> &[usize] {
        &self.matched
    }

    pub fn satisfied_flags(&self) -> &[bool] {
        &self.satisfied
    }

    pub fn bank_index(&self) -> usize {
        self.bank_index
    }

    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }

    /// Progress after appending `next` to the stream. A mismatch falls back to
    /// the longest phrase prefix that is still a suffix of the stream.
    pub fn advance(&self, constraints: &ConstraintSet, next: TokenId) -> Self {
        let mut out = self.clone();
        for (i, phrase) in constraints.positives.iter().enumerate() {
            if out.satisfied[i] {
                continue;
            }
            let m = phrase.step(out.matched[i], next);
            out.matched[i] = m;
            if m == phrase.tokens.len() {
                out.satisfied[i] = true;
            }
            out.consumed[i] = out.consumed[i].max(m);
        }
        out.bank_index = out.consumed.iter().sum();
        out
    }

    /// For every unsatisfied positive phrase, the token that would extend its
    /// current match: `(phrase index, token)`.
    pub fn pending_tokens<'a>(&'a self, constraints: &'a ConstraintSet) -> impl Iterator<Item = (usize, TokenId)> + 'a {
        constraints
            .positives
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.satisfied[*i])
            .map(|(i, p)| (i, p.tokens[self.matched[i]]))
    }
}

/// Tokens that, appended to `suffix`, would complete some negative phrase.
pub fn blocked_tokens(suffix: &[TokenId], negatives: &[PhraseConstraint]) -> BTreeSet<TokenId> {
    negatives
        .iter()
        .filter_map(|phrase| {
            let (&last, head) = phrase.tokens.split_last()?;
            suffix.ends_with(head).then_some(last)
        })
        .collect()
}

/// Text-level verdict: every positive phrase occurs and no negative phrase does.
pub fn satisfied(output_text: &str, constraints: &ConstraintSet) -> bool {
    constraints.positives.iter().all(|p| output_text.contains(p.text()))
        && !constraints.negatives.iter().any(|p| output_text.contains(p.text()))
}
