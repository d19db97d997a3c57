use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DecodeError, DecoderConfig};
use crate::model::{softmax, ModelError, NextTokenDistribution, ScoredModel, TokenId};

/// Divides log-probabilities by `temperature` and renormalizes.
pub fn apply_temperature(log_probs: &[f64], temperature: f64) -> Result<NextTokenDistribution, ModelError> {
    let scaled: Vec<f64> = log_probs.iter().map(|lp| lp / temperature).collect();
    NextTokenDistribution::from_probs(softmax(&scaled))
}

/// Tokens of the top-p nucleus in descending probability order (ties to the
/// lower id): the shortest prefix whose cumulative probability reaches
/// `top_p`. Zero-probability tokens are never included.
pub fn nucleus_support(dist: &NextTokenDistribution, top_p: f64) -> Vec<TokenId> {
    let probs = dist.probs();
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    if top_p < 1.0 {
        let mut cum = 0.0;
        for (k, &i) in order.iter().enumerate() {
            cum += probs[i];
            if cum >= top_p {
                order.truncate(k + 1);
                break;
            }
        }
    }
    order.into_iter().map(TokenId::from).collect()
}

/// Zeroes every token outside the nucleus and renormalizes the rest.
pub fn nucleus_filter(dist: &NextTokenDistribution, top_p: f64) -> NextTokenDistribution {
    let support = nucleus_support(dist, top_p);
    let kept: f64 = support.iter().map(|&t| dist.prob(t)).sum();
    let mut probs = vec![0.0; dist.len()];
    for t in support {
        probs[t.index()] = dist.prob(t) / kept;
    }
    NextTokenDistribution::from_probs(probs).expect("renormalized nucleus is a distribution")
}

/// Samples one completion token by token from the temperature-scaled,
/// nucleus-filtered distribution.
pub fn nucleus_sample<M: ScoredModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &DecoderConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    let eos = model.eos();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut context = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < config.max_new_tokens {
        let scaled = apply_temperature(&model.next_log_probs(&context)?, config.temperature)?;
        let filtered = nucleus_filter(&scaled, config.top_p);
        let index = WeightedIndex::new(filtered.probs())
            .map_err(|e| ModelError::InvalidDistribution(e.to_string()))?;
        let token = TokenId::from(index.sample(&mut rng));
        out.push(token);
        context.push(token);
        if Some(token) == eos {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NgramModel, UniformModel};

    fn dist(p: &[f64]) -> NextTokenDistribution {
        NextTokenDistribution::from_probs(p.to_vec()).unwrap()
    }

    #[test]
    fn uniform_keeps_everything() {
        let d = NextTokenDistribution::uniform(4);
        assert_eq!(nucleus_filter(&d, 0.95), d);
    }

    #[test]
    fn dominant_token_alone() {
        let f = nucleus_filter(&dist(&[0.9, 0.05, 0.05]), 0.8);
        assert_eq!(f.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn full_mass_keeps_nonzero() {
        let f = nucleus_filter(&dist(&[0.5, 0.0, 0.25, 0.25]), 1.0);
        assert_eq!(f.probs(), &[0.5, 0.0, 0.25, 0.25]);
        assert_eq!(nucleus_support(&f, 1.0), vec![TokenId(0), TokenId(2), TokenId(3)]);
    }

    #[test]
    fn support_tie_prefers_lower_id() {
        let s = nucleus_support(&dist(&[0.2, 0.4, 0.4]), 0.3);
        assert_eq!(s, vec![TokenId(1)]);
    }

    #[test]
    fn temperature_sharpens() {
        let d = apply_temperature(&[0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()], 0.5).unwrap();
        // squares then renormalizes: 0.25, 0.0625, 0.0625
        assert!((d.probs()[0] - 0.25 / 0.375).abs() < 1e-12);
    }

    #[test]
    fn point_mass_and_determinism() {
        let seq = vec![TokenId(2), TokenId(0), TokenId(1)];
        let train = vec![TokenId(3), TokenId(2), TokenId(0), TokenId(1)];
        let m = NgramModel::train(2, 4, Some(TokenId(1)), &[train], 0.0).unwrap();
        let cfg = DecoderConfig::default();
        for seed in 0..20 {
            assert_eq!(nucleus_sample(&m, &[TokenId(3)], &cfg.with_seed(seed)).unwrap(), seq);
        }

        let u = UniformModel::new(6, None);
        let cfg = DecoderConfig { max_new_tokens: 20, rng_seed: 9, ..Default::default() };
        let a = nucleus_sample(&u, &[], &cfg).unwrap();
        assert_eq!(a, nucleus_sample(&u, &[], &cfg).unwrap());
        assert_ne!(a, nucleus_sample(&u, &[], &cfg.with_seed(10)).unwrap());
    }
}
