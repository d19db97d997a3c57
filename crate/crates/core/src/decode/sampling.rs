use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Beam, DecodeError, DecoderConfig, Hypothesis};
use crate::model::{ScoredModel, TokenId};

/// One entry of a successor pool: beam `beam` either extended by `token` or,
/// when `token` is `None`, carried over unchanged because it has finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub beam: usize,
    pub token: Option<TokenId>,
    pub cum_logprob: f64,
}

/// Draws `count` pool indices with replacement, each with probability
/// proportional to `exp(log_weights[i])`. A pool whose weights are all zero
/// is sampled uniformly.
pub fn sample_successors<R: Rng + ?Sized>(log_weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    if log_weights.is_empty() {
        return Vec::new();
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if max == f64::NEG_INFINITY {
        vec![1.0; log_weights.len()]
    } else {
        log_weights.iter().map(|w| (w - max).exp()).collect()
    };
    let index = WeightedIndex::new(&weights).expect("weights are finite with a positive maximum");
    (0..count).map(|_| index.sample(rng)).collect()
}

/// Successor pool of `beams`, in beam order and ascending token id.
/// Zero-probability extensions and tokens rejected by `allow` are left out.
pub(crate) fn successor_pool<M, F>(
    model: &M,
    prompt: &[TokenId],
    beams: &[(usize, &Beam)],
    mut allow: F,
) -> Result<Vec<Successor>, DecodeError>
where
    M: ScoredModel + ?Sized,
    F: FnMut(usize, TokenId) -> bool,
{
    let mut pool = Vec::new();
    for &(i, beam) in beams {
        if beam.finished {
            pool.push(Successor { beam: i, token: None, cum_logprob: beam.cum_logprob });
            continue;
        }
        let log_probs = model.next_log_probs(&beam.context(prompt))?;
        for (t, &lp) in log_probs.iter().enumerate() {
            let token = TokenId::from(t);
            if lp > f64::NEG_INFINITY && allow(i, token) {
                pool.push(Successor { beam: i, token: Some(token), cum_logprob: beam.cum_logprob + lp });
            }
        }
    }
    Ok(pool)
}

pub(crate) fn realize(s: &Successor, beams: &[Beam], eos: Option<TokenId>, max_new_tokens: usize) -> Beam {
    let parent = &beams[s.beam];
    match s.token {
        None => parent.clone(),
        Some(t) => {
            let mut b = parent.extend(t, 0.0, eos, max_new_tokens);
            b.cum_logprob = s.cum_logprob;
            b
        }
    }
}

/// Stochastic beam search: at each step `B` successors are drawn with
/// replacement from all extensions of all beams, weighted by the extended
/// sequence probability. Finished beams compete as themselves. Returns the
/// `B` final beams, most likely first.
pub fn beam_sample<M: ScoredModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &DecoderConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    let eos = model.eos();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut beams = vec![Beam::root()];
    while beams.iter().any(|b| !b.finished) {
        let indexed: Vec<(usize, &Beam)> = beams.iter().enumerate().collect();
        let pool = successor_pool(model, prompt, &indexed, |_, _| true)?;
        let log_weights: Vec<f64> = pool.iter().map(|s| s.cum_logprob).collect();
        let mut drawn: Vec<(usize, Beam)> = sample_successors(&log_weights, config.beam_width, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(d, i)| (d, realize(&pool[i], &beams, eos, config.max_new_tokens)))
            .collect();
        drawn.sort_by(|a, b| b.1.cum_logprob.total_cmp(&a.1.cum_logprob).then(a.0.cmp(&b.0)));
        beams = drawn.into_iter().map(|(_, b)| b).collect();
    }
    Ok(beams.into_iter().map(Beam::into_hypothesis).collect())
}
