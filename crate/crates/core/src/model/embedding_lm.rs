//! A tiny language model with tied input/output embeddings.
//!
//! The hidden state for output position `n` is
//! `h_n = tanh(W · mean(last w input embeddings) + b)` and the logits are
//! `E · h_n`, where `E` is the same table used to embed the inputs. Because
//! the output layer is `E`, the score of a *soft* token `ẽ_n` is simply
//! `ẽ_n · h_n`, which is what makes gradient-based decoding over embeddings
//! possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::dot;
use super::{
    log_sum_exp, softmax, DifferentiableModel, EmbeddingTable, Matrix, ModelError, NextTokenDistribution,
    ScoredModel, SoftSequence, TokenId,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLm {
    embeddings: EmbeddingTable,
    hidden_weight: Matrix,
    hidden_bias: Vec<f64>,
    window: usize,
    eos: Option<TokenId>,
}

/// Output of [`DifferentiableModel::soft_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftForward {
    pub log_prob: f64,
    /// Next-token logits at every output position (`N × V`).
    pub logits: Vec<Vec<f64>>,
}

// Per-position forward values kept for the backward pass.
struct PositionCache {
    window: std::ops::Range<usize>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_prob: f64,
    logits: Vec<f64>,
}

pub const DEFAULT_WINDOW: usize = 4;

impl EmbeddingLm {
    pub fn new(
        embeddings: EmbeddingTable,
        hidden_weight: Matrix,
        hidden_bias: Vec<f64>,
        window: usize,
        eos: Option<TokenId>,
    ) -> Result<Self, ModelError> {
        let d = embeddings.dim();
        if hidden_weight.rows() != d || hidden_weight.cols() != d {
            return Err(ModelError::InvalidParameters(format!(
                "hidden weight must be {d}x{d}, got {}x{}",
                hidden_weight.rows(),
                hidden_weight.cols()
            )));
        }
        if hidden_bias.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, actual: hidden_bias.len() });
        }
        if window == 0 {
            return Err(ModelError::InvalidParameters("window must be >= 1".into()));
        }
        if !hidden_weight.is_finite() || hidden_bias.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidParameters("non-finite parameters".into()));
        }
        if let Some(e) = eos.filter(|e| e.index() >= embeddings.vocab_size()) {
            return Err(ModelError::InvalidToken { token: e, vocab_size: embeddings.vocab_size() });
        }
        Ok(Self { embeddings, hidden_weight, hidden_bias, window, eos })
    }

    /// Parameters drawn uniformly from `[-scale, scale]` (embeddings) and
    /// `[-1, 1]` (hidden layer).
    pub fn random(vocab_size: usize, dim: usize, window: usize, eos: Option<TokenId>, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..=s)).collect() };
        let table = Matrix::from_flat(vocab_size, dim, uniform(vocab_size * dim, scale)).expect("shape");
        let w = Matrix::from_flat(dim, dim, uniform(dim * dim, 1.0)).expect("shape");
        let b = uniform(dim, 1.0);
        Self::new(EmbeddingTable::new(table).expect("valid table"), w, b, window, eos).expect("valid model")
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hidden_weight(&self) -> &Matrix {
        &self.hidden_weight
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    fn hidden_from_window(&self, inputs: &[&[f64]]) -> Vec<f64> {
        let d = self.embeddings.dim();
        let mut mean = vec![0.0; d];
        if !inputs.is_empty() {
            for row in inputs {
                for (m, x) in mean.iter_mut().zip(row.iter()) {
                    *m += x;
                }
            }
            let count = inputs.len() as f64;
            mean.iter_mut().for_each(|m| *m /= count);
        }
        self.hidden_weight
            .mul_vec(&mean)
            .iter()
            .zip(&self.hidden_bias)
            .map(|(a, b)| (a + b).tanh())
            .collect()
    }

    fn logits_for_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        self.embeddings.matrix().mul_vec(hidden)
    }

    fn hard_logits(&self, context: &[TokenId]) -> Vec<f64> {
        let start = context.len().saturating_sub(self.window);
        let rows: Vec<&[f64]> = context[start..].iter().map(|&t| self.embeddings.row(t)).collect();
        self.logits_for_hidden(&self.hidden_from_window(&rows))
    }

    fn check_soft(&self, soft: &SoftSequence) -> Result<(), ModelError> {
        if soft.dim() != self.embeddings.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.embeddings.dim(), actual: soft.dim() });
        }
        Ok(())
    }

    fn forward_cached(&self, prompt: &[TokenId], soft: &SoftSequence) -> Result<Vec<PositionCache>, ModelError> {
        self.check_tokens(prompt)?;
        self.check_soft(soft)?;
        let p = prompt.len();
        let input = |g: usize| -> &[f64] {
            if g < p {
                self.embeddings.row(prompt[g])
            } else {
                soft.row(g - p)
            }
        };
        let mut out = Vec::with_capacity(soft.len());
        for n in 0..soft.len() {
            let end = p + n;
            let window = end.saturating_sub(self.window)..end;
            let rows: Vec<&[f64]> = window.clone().map(input).collect();
            let hidden = self.hidden_from_window(&rows);
            let logits = self.logits_for_hidden(&hidden);
            let lse = log_sum_exp(&logits);
            let log_prob = dot(soft.row(n), &hidden) - lse;
            let probs = softmax(&logits);
            out.push(PositionCache { window, hidden, probs, log_prob, logits });
        }
        Ok(out)
    }
}

impl ScoredModel for EmbeddingLm {
    fn vocab_size(&self) -> usize {
        self.embeddings.vocab_size()
    }

    fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        self.check_tokens(context)?;
        NextTokenDistribution::from_logits(&self.hard_logits(context))
    }

    fn next_log_probs(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.check_tokens(context)?;
        let logits = self.hard_logits(context);
        let lse = log_sum_exp(&logits);
        Ok(logits.into_iter().map(|l| l - lse).collect())
    }
}

impl DifferentiableModel for EmbeddingLm {
    fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    fn soft_forward(&self, prompt: &[TokenId], soft: &SoftSequence) -> Result<SoftForward, ModelError> {
        let cache = self.forward_cached(prompt, soft)?;
        let log_prob = cache.iter().map(|c| c.log_prob).sum();
        Ok(SoftForward { log_prob, logits: cache.into_iter().map(|c| c.logits).collect() })
    }

    fn soft_gradient(&self, prompt: &[TokenId], soft: &SoftSequence) -> Result<Matrix, ModelError> {
        let cache = self.forward_cached(prompt, soft)?;
        let p = prompt.len();
        let d = self.embeddings.dim();
        let mut grad = Matrix::zeros(soft.len(), d);
        for (n, c) in cache.iter().enumerate() {
            // loss_n = lse(E h_n) - ẽ_n · h_n
            for (g, h) in grad.row_mut(n).iter_mut().zip(&c.hidden) {
                *g -= h;
            }
            if c.window.end <= p {
                continue;
            }
            let expected = self.embeddings.matrix().mul_vec_transposed(&c.probs);
            let d_pre: Vec<f64> = (0..d)
                .map(|i| (expected[i] - soft.row(n)[i]) * (1.0 - c.hidden[i] * c.hidden[i]))
                .collect();
            let d_mean = self.hidden_weight.mul_vec_transposed(&d_pre);
            let count = c.window.len() as f64;
            for g in c.window.clone().filter(|&g| g >= p) {
                for (dst, dm) in grad.row_mut(g - p).iter_mut().zip(&d_mean) {
                    *dst += dm / count;
                }
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sequence_logprob;

    fn finite_difference(model: &EmbeddingLm, prompt: &[TokenId], soft: &SoftSequence, r: usize, c: usize) -> f64 {
        let h = 1e-5;
        let mut plus = soft.clone();
        plus.row_mut(r)[c] += h;
        let mut minus = soft.clone();
        minus.row_mut(r)[c] -= h;
        let fp = -model.soft_forward(prompt, &plus).unwrap().log_prob;
        let fm = -model.soft_forward(prompt, &minus).unwrap().log_prob;
        (fp - fm) / (2.0 * h)
    }

    #[test]
    fn soft_matches_hard_on_exact_rows() {
        let m = EmbeddingLm::random(7, 3, 2, None, 1.0, 11);
        let prompt = [TokenId(1), TokenId(4)];
        let completion = [TokenId(0), TokenId(6), TokenId(2), TokenId(2)];
        let soft = SoftSequence::from_tokens(m.embeddings(), &completion);
        let soft_lp = m.soft_forward(&prompt, &soft).unwrap().log_prob;
        let hard_lp = sequence_logprob(&m, &prompt, &completion).unwrap();
        assert!((soft_lp - hard_lp).abs() < 1e-9, "{soft_lp} vs {hard_lp}");
    }

    #[test]
    fn zero_hidden_layer_gives_uniform_and_flat_gradient_on_context() {
        let table = EmbeddingTable::new(Matrix::from_rows(&[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]]).unwrap()).unwrap();
        let m = EmbeddingLm::new(table, Matrix::zeros(2, 2), vec![0.0; 2], 4, None).unwrap();
        let d = m.next_distribution(&[TokenId(0)]).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let soft = SoftSequence::new(Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 2.0]]).unwrap());
        let g = m.soft_gradient(&[TokenId(1)], &soft).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = EmbeddingLm::random(9, 4, 3, None, 0.8, 5);
        let prompt = [TokenId(2)];
        let mut soft = SoftSequence::new(Matrix::zeros(5, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        soft.matrix_mut().as_mut_slice().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        let g = m.soft_gradient(&prompt, &soft).unwrap();
        for r in 0..5 {
            for c in 0..4 {
                let fd = finite_difference(&m, &prompt, &soft, r, c);
                let an = g.get(r, c);
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-7, "({r},{c}) {an} vs {fd}");
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = EmbeddingLm::random(5, 3, 2, None, 1.0, 0);
        let soft = SoftSequence::new(Matrix::zeros(2, 4));
        assert_eq!(
            m.soft_gradient(&[], &soft).unwrap_err(),
            ModelError::DimensionMismatch { expected: 3, actual: 4 }
        );
    }
}
