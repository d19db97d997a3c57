use std::collections::{BTreeMap, HashMap};

use super::{ModelError, NextTokenDistribution, ScoredModel, TokenId};

/// Continuation counts observed after one context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextCounts {
    pub total: u64,
    pub next: BTreeMap<TokenId, u64>,
}

/// Count-based n-gram model with additive smoothing and backoff.
///
/// The distribution for a context uses the longest suffix of that context
/// (at most `order - 1` tokens) which was seen during training, smoothed as
/// `(count + k) / (total + k·V)`. With `k = 1` this is add-one smoothing and
/// no probability is ever zero. With `k = 0` it is the maximum-likelihood
/// estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    vocab_size: usize,
    eos: Option<TokenId>,
    smoothing: f64,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl NgramModel {
    pub const ADD_ONE: f64 = 1.0;

    /// Counts every `k`-gram for `k` in `1..=order` over the given token
    /// sequences. Callers append the end-of-sequence token themselves if the
    /// model should learn to stop.
    pub fn train(
        order: usize,
        vocab_size: usize,
        eos: Option<TokenId>,
        sequences: &[Vec<TokenId>],
        smoothing: f64,
    ) -> Result<Self, ModelError> {
        let mut model = Self::empty(order, vocab_size, eos, smoothing)?;
        for seq in sequences {
            model.check_tokens(seq)?;
            for i in 0..seq.len() {
                for k in 0..order.min(i + 1) {
                    let entry = model.counts.entry(seq[i - k..i].to_vec()).or_default();
                    entry.total += 1;
                    *entry.next.entry(seq[i]).or_default() += 1;
                }
            }
        }
        Ok(model)
    }

    pub fn empty(order: usize, vocab_size: usize, eos: Option<TokenId>, smoothing: f64) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidParameters("n-gram order must be >= 1".into()));
        }
        if vocab_size < 2 {
            return Err(ModelError::InvalidParameters("vocabulary size must be >= 2".into()));
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(ModelError::InvalidParameters(format!("smoothing {smoothing}")));
        }
        if let Some(e) = eos.filter(|e| e.index() >= vocab_size) {
            return Err(ModelError::InvalidToken { token: e, vocab_size });
        }
        Ok(Self { order, vocab_size, eos, smoothing, counts: HashMap::new() })
    }

    /// Inserts precomputed counts for one context (used by the model-file loader).
    pub fn insert_counts(&mut self, context: Vec<TokenId>, next: BTreeMap<TokenId, u64>) -> Result<(), ModelError> {
        if context.len() >= self.order {
            return Err(ModelError::InvalidParameters(format!(
                "context of length {} exceeds order {}",
                context.len(),
                self.order
            )));
        }
        self.check_tokens(&context)?;
        self.check_tokens(&next.keys().copied().collect::<Vec<_>>())?;
        let total = next.values().sum();
        self.counts.insert(context, ContextCounts { total, next });
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// All contexts in sorted order.
    pub fn counts(&self) -> Vec<(&[TokenId], &ContextCounts)> {
        let mut all: Vec<_> = self.counts.iter().map(|(k, v)| (k.as_slice(), v)).collect();
        all.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(b.0)));
        all
    }
}

impl ScoredModel for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        self.check_tokens(context)?;
        let longest = context.len().min(self.order - 1);
        let found = (0..=longest)
            .rev()
            .filter_map(|k| self.counts.get(&context[context.len() - k..]))
            .find(|c| c.total > 0);
        let Some(counts) = found else {
            return Ok(NextTokenDistribution::uniform(self.vocab_size));
        };
        let denom = counts.total as f64 + self.smoothing * self.vocab_size as f64;
        let mut probs = vec![self.smoothing / denom; self.vocab_size];
        for (&t, &c) in &counts.next {
            probs[t.index()] = (c as f64 + self.smoothing) / denom;
        }
        NextTokenDistribution::from_probs(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sequence_logprob, Tokenizer};

    fn abab(smoothing: f64) -> (Tokenizer, NgramModel) {
        let tok = Tokenizer::whitespace_from_corpus(["a b a b"]).unwrap();
        let seq = tok.tokenize("a b a b").unwrap();
        let m = NgramModel::train(2, tok.vocabulary().len(), tok.eos(), &[seq], smoothing).unwrap();
        (tok, m)
    }

    #[test]
    fn mle_bigram_on_abab() {
        let (tok, m) = abab(0.0);
        let a = tok.vocabulary().id("a").unwrap();
        let b = tok.vocabulary().id(" b").unwrap();
        let sp_a = tok.vocabulary().id(" a").unwrap();
        assert_eq!(m.next_distribution(&[a]).unwrap().prob(b), 1.0);
        assert_eq!(sequence_logprob(&m, &[a], &[b, sp_a]).unwrap(), 0.0);
        // empty context backs off to unigram counts
        let uni = m.next_distribution(&[]).unwrap();
        assert!((uni.prob(b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn add_one_has_no_zeros() {
        let (tok, m) = abab(NgramModel::ADD_ONE);
        let a = tok.vocabulary().id("a").unwrap();
        let d = m.next_distribution(&[a]).unwrap();
        assert!(d.probs().iter().all(|&p| p > 0.0));
        // count 1 for " b" after "a", V = 4
        assert!((d.prob(tok.vocabulary().id(" b").unwrap()) - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_is_uniform() {
        let m = NgramModel::empty(3, 4, None, 0.0).unwrap();
        assert_eq!(m.next_distribution(&[TokenId(1)]).unwrap(), NextTokenDistribution::uniform(4));
    }
}
