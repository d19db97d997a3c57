use super::{score_order, Beam, DecodeError, DecoderConfig};
use crate::model::{ScoredModel, TokenId};

/// Picks the most likely token at every step (lowest id on ties).
pub fn greedy_decode<M: ScoredModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &DecoderConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    let eos = model.eos();
    let mut context = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < config.max_new_tokens {
        let token = model.next_distribution(&context)?.argmax();
        out.push(token);
        context.push(token);
        if Some(token) == eos {
            break;
        }
    }
    Ok(out)
}

/// Keeps the `beam_width` most likely hypotheses at every step and returns
/// the most likely finished one.
///
/// Finished hypotheses stay in the pool and compete with extensions of
/// unfinished ones, so with a beam at least as wide as the number of
/// possible sequences the result is the exact argmax.
pub fn beam_search<M: ScoredModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &DecoderConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    let eos = model.eos();
    let mut beams = vec![Beam::root()];
    while beams.iter().any(|b| !b.finished) {
        let mut candidates = Vec::with_capacity(beams.len() * model.vocab_size());
        for beam in beams {
            if beam.finished {
                candidates.push(beam);
                continue;
            }
            let log_probs = model.next_log_probs(&beam.context(prompt))?;
            for (t, &lp) in log_probs.iter().enumerate() {
                candidates.push(beam.extend(TokenId::from(t), lp, eos, config.max_new_tokens));
            }
        }
        candidates.sort_by(|a, b| score_order(a.cum_logprob, &a.tokens, b.cum_logprob, &b.tokens));
        candidates.truncate(config.beam_width);
        beams = candidates;
    }
    Ok(beams.swap_remove(0).tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NgramModel, UniformModel};

    fn point_mass() -> NgramModel {
        // 0 -> 1 -> 2 -> eos(3), deterministic under MLE
        let seq = vec![TokenId(0), TokenId(1), TokenId(2), TokenId(3)];
        NgramModel::train(2, 4, Some(TokenId(3)), &[seq], 0.0).unwrap()
    }

    #[test]
    fn point_mass_sequence_for_any_width() {
        let m = point_mass();
        let cfg = DecoderConfig { max_new_tokens: 10, ..Default::default() };
        let expected = vec![TokenId(0), TokenId(1), TokenId(2), TokenId(3)];
        assert_eq!(greedy_decode(&m, &[], &cfg).unwrap(), expected);
        for b in [1, 2, 7, 25] {
            let c = DecoderConfig { beam_width: b, ..cfg.clone() };
            assert_eq!(beam_search(&m, &[], &c).unwrap(), expected);
        }
    }

    #[test]
    fn ties_break_to_lowest_id() {
        let m = UniformModel::new(5, None);
        let cfg = DecoderConfig { max_new_tokens: 3, beam_width: 4, ..Default::default() };
        assert_eq!(greedy_decode(&m, &[], &cfg).unwrap(), vec![TokenId(0); 3]);
        assert_eq!(beam_search(&m, &[], &cfg).unwrap(), vec![TokenId(0); 3]);
    }

    #[test]
    fn length_cap_finishes() {
        let m = UniformModel::new(3, Some(TokenId(2)));
        let cfg = DecoderConfig { max_new_tokens: 2, beam_width: 3, ..Default::default() };
        assert_eq!(greedy_decode(&m, &[], &cfg).unwrap().len(), 2);
    }
}
