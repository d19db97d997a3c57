use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampling::{realize, sample_successors, successor_pool, Successor};
use super::{Beam, DecodeError, DecoderConfig};
use crate::constraint::{blocked_tokens, satisfied, ConstraintProgress, ConstraintSet};
use crate::model::{ScoredModel, TokenId, Tokenizer};

/// A finished constrained beam together with its text-level verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedOutput {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub cum_logprob: f64,
    pub satisfied: bool,
}

/// One candidate considered during a decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrace {
    /// Completion of the parent beam.
    pub parent: Vec<TokenId>,
    /// Appended token; `None` for a finished beam carried over.
    pub token: Option<TokenId>,
    pub forced: bool,
    /// Bank of the candidate after the extension.
    pub bank: usize,
    pub cum_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace {
    pub candidates: Vec<CandidateTrace>,
    /// Indices into `candidates` of the beams kept for the next step.
    pub selected: Vec<usize>,
}

struct Candidate {
    beam: Beam,
    progress: ConstraintProgress,
    trace: CandidateTrace,
}

/// Beam sampling with lexical constraints.
///
/// Each step groups the current beams into banks by constraint progress.
/// Every bank draws `B` successors over its own beams, skipping any token
/// that would complete a negative phrase. Each unfinished beam also gets one
/// forced extension per unsatisfied positive phrase (the phrase's next
/// token). The next beams are picked round-robin across the candidate banks,
/// most-progressed bank first, best score first within a bank.
///
/// With an empty constraint set this draws exactly the same samples as
/// [`super::beam_sample`] for the same seed.
pub fn constrained_beam_sample<M: ScoredModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &DecoderConfig,
) -> Result<Vec<ConstrainedOutput>, DecodeError> {
    run(model, tokenizer, prompt, constraints, config, None)
}

/// Like [`constrained_beam_sample`], also recording every step's candidates.
pub fn constrained_beam_sample_traced<M: ScoredModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &DecoderConfig,
) -> Result<(Vec<ConstrainedOutput>, Vec<StepTrace>), DecodeError> {
    let mut trace = Vec::new();
    let out = run(model, tokenizer, prompt, constraints, config, Some(&mut trace))?;
    Ok((out, trace))
}

fn run<M: ScoredModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &DecoderConfig,
    mut trace: Option<&mut Vec<StepTrace>>,
) -> Result<Vec<ConstrainedOutput>, DecodeError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    for phrase in constraints.iter() {
        model.check_tokens(phrase.tokens())?;
    }
    let eos = model.eos();
    let width = config.beam_width;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut beams = vec![Beam::root()];
    let mut progress = vec![ConstraintProgress::new(constraints)];

    while beams.iter().any(|b| !b.finished) {
        let mut banks: BTreeMap<usize, Vec<(usize, &Beam)>> = BTreeMap::new();
        for (i, b) in beams.iter().enumerate() {
            banks.entry(progress[i].bank_index()).or_default().push((i, b));
        }

        let mut candidates: Vec<Candidate> = Vec::new();
        let make = |s: &Successor, forced: bool| {
            let beam = realize(s, &beams, eos, config.max_new_tokens);
            let p = match s.token {
                Some(t) => progress[s.beam].advance(constraints, t),
                None => progress[s.beam].clone(),
            };
            let trace = CandidateTrace {
                parent: beams[s.beam].tokens.clone(),
                token: s.token,
                forced,
                bank: p.bank_index(),
                cum_logprob: s.cum_logprob,
            };
            Candidate { beam, progress: p, trace }
        };

        let blocked: Vec<BTreeSet<TokenId>> = beams
            .iter()
            .map(|b| blocked_tokens(&b.context(prompt), constraints.negatives()))
            .collect();
        for members in banks.values().rev() {
            let pool = successor_pool(model, prompt, members, |i, t| !blocked[i].contains(&t))?;
            let log_weights: Vec<f64> = pool.iter().map(|s| s.cum_logprob).collect();
            for i in sample_successors(&log_weights, width, &mut rng) {
                candidates.push(make(&pool[i], false));
            }
        }

        let mut forced_seen: HashSet<Vec<TokenId>> = HashSet::new();
        for (i, beam) in beams.iter().enumerate() {
            if beam.finished {
                continue;
            }
            let pending: Vec<TokenId> = progress[i].pending_tokens(constraints).map(|(_, t)| t).collect();
            if pending.is_empty() {
                continue;
            }
            let log_probs = model.next_log_probs(&beam.context(prompt))?;
            for t in pending {
                if blocked[i].contains(&t) {
                    continue;
                }
                let mut key = beam.tokens.clone();
                key.push(t);
                if forced_seen.insert(key) {
                    let s = Successor { beam: i, token: Some(t), cum_logprob: beam.cum_logprob + log_probs[t.index()] };
                    candidates.push(make(&s, true));
                }
            }
        }

        let selected = select_round_robin(&candidates, width);
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(StepTrace {
                candidates: candidates.iter().map(|c| c.trace.clone()).collect(),
                selected: selected.clone(),
            });
        }
        let mut chosen: Vec<Option<Candidate>> = candidates.into_iter().map(Some).collect();
        let next: Vec<Candidate> = selected.iter().map(|&i| chosen[i].take().expect("selected once")).collect();
        beams = Vec::with_capacity(next.len());
        progress = Vec::with_capacity(next.len());
        for c in next {
            beams.push(c.beam);
            progress.push(c.progress);
        }
    }

    beams
        .into_iter()
        .map(|b| {
            let text = tokenizer.detokenize(&b.tokens)?;
            let ok = satisfied(&text, constraints);
            Ok(ConstrainedOutput { tokens: b.tokens, text, cum_logprob: b.cum_logprob, satisfied: ok })
        })
        .collect()
}

/// Picks up to `width` candidate indices, taking the best remaining candidate
/// of each bank in turn (highest bank first) until enough are chosen. The
/// result is ordered by descending score, then candidate index.
fn select_round_robin(candidates: &[Candidate], width: usize) -> Vec<usize> {
    let mut banks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        banks.entry(c.trace.bank).or_default().push(i);
    }
    let score = |i: usize| candidates[i].beam.cum_logprob;
    let mut queues: Vec<std::vec::IntoIter<usize>> = banks
        .into_values()
        .rev()
        .map(|mut members| {
            members.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
            members.into_iter()
        })
        .collect();
    let mut selected = Vec::with_capacity(width);
    'outer: while selected.len() < width {
        let mut any = false;
        for q in queues.iter_mut() {
            if let Some(i) = q.next() {
                selected.push(i);
                any = true;
                if selected.len() == width {
                    break 'outer;
                }
            }
        }
        if !any {
            break;
        }
    }
    selected.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    selected
}

/// Draws outputs from `attempt` until one is satisfied or `cap` outputs have
/// been drawn. Returns the satisfied output and the number of outputs drawn.
pub fn sample_until_satisfied<F>(cap: usize, mut attempt: F) -> Result<(ConstrainedOutput, usize), DecodeError>
where
    F: FnMut(usize) -> Result<Vec<ConstrainedOutput>, DecodeError>,
{
    let mut drawn = 0;
    let mut round = 0;
    while drawn < cap {
        let outputs = attempt(round)?;
        round += 1;
        if outputs.is_empty() {
            break;
        }
        for o in outputs {
            drawn += 1;
            if o.satisfied {
                return Ok((o, drawn));
            }
            if drawn == cap {
                break;
            }
        }
    }
    Err(DecodeError::NoConstrainedOutput { attempts: drawn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::beam_sample;
    use crate::model::NgramModel;

    fn setup() -> (Tokenizer, NgramModel) {
        let corpus = ["x = a b c ;", "x = a d ;", "y = b c d ;", "x = c a b ;"];
        let tok = Tokenizer::whitespace_from_corpus(corpus).unwrap();
        let eos = tok.eos().unwrap();
        let seqs: Vec<Vec<TokenId>> = corpus
            .iter()
            .map(|s| {
                let mut t = tok.tokenize(s).unwrap();
                t.push(eos);
                t
            })
            .collect();
        let m = NgramModel::train(2, tok.vocabulary().len(), Some(eos), &seqs, 1.0).unwrap();
        (tok, m)
    }

    #[test]
    fn empty_constraints_match_beam_sample() {
        let (tok, m) = setup();
        let prompt = tok.tokenize("x =").unwrap();
        for seed in 0..5 {
            let cfg = DecoderConfig { beam_width: 4, max_new_tokens: 8, rng_seed: seed, ..Default::default() };
            let plain = beam_sample(&m, &prompt, &cfg).unwrap();
            let cons = constrained_beam_sample(&m, &tok, &prompt, &ConstraintSet::empty(), &cfg).unwrap();
            let a: Vec<_> = plain.iter().map(|h| &h.tokens).collect();
            let b: Vec<_> = cons.iter().map(|o| &o.tokens).collect();
            assert_eq!(a, b);
            assert!(cons.iter().all(|o| o.satisfied));
        }
    }

    #[test]
    fn forced_positive_and_blocked_negative() {
        let (tok, m) = setup();
        let prompt = tok.tokenize("x =").unwrap();
        let set = ConstraintSet::from_texts(&[" d ;"], &[" b c"], &tok).unwrap();
        let blocked_after = tok.tokenize(" b").unwrap()[0];
        let blocked = tok.tokenize(" c").unwrap()[0];
        let cfg = DecoderConfig { beam_width: 6, max_new_tokens: 8, rng_seed: 1, ..Default::default() };
        let (out, trace) = constrained_beam_sample_traced(&m, &tok, &prompt, &set, &cfg).unwrap();
        assert!(out.iter().any(|o| o.satisfied));
        for o in &out {
            assert!(!o.text.contains(" b c"));
            assert_eq!(o.satisfied, satisfied(&o.text, &set));
        }
        for step in &trace {
            for c in &step.candidates {
                let mut ctx = prompt.clone();
                ctx.extend_from_slice(&c.parent);
                if ctx.last() == Some(&blocked_after) {
                    assert_ne!(c.token, Some(blocked));
                }
            }
        }
    }

    #[test]
    fn nonempty_banks_survive() {
        let (tok, m) = setup();
        let prompt = tok.tokenize("y =").unwrap();
        let set = ConstraintSet::from_texts(&[" a d", " c a"], &[], &tok).unwrap();
        let cfg = DecoderConfig { beam_width: 5, max_new_tokens: 8, rng_seed: 7, ..Default::default() };
        let (_, trace) = constrained_beam_sample_traced(&m, &tok, &prompt, &set, &cfg).unwrap();
        for step in &trace {
            let banks: HashSet<usize> = step.candidates.iter().map(|c| c.bank).collect();
            let kept: HashSet<usize> = step.selected.iter().map(|&i| step.candidates[i].bank).collect();
            if banks.len() <= cfg.beam_width {
                assert_eq!(banks, kept);
            }
        }
    }

    #[test]
    fn retry_counts_outputs() {
        let out = |ok| ConstrainedOutput { tokens: vec![], text: String::new(), cum_logprob: 0.0, satisfied: ok };
        let r = sample_until_satisfied(10, |round| Ok(vec![out(false), out(round == 1)])).unwrap();
        assert_eq!(r.1, 4);
        let e = sample_until_satisfied(5, |_| Ok(vec![out(false); 2])).unwrap_err();
        assert_eq!(e, DecodeError::NoConstrainedOutput { attempts: 5 });
    }
}
