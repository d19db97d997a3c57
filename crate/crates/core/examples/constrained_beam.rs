//! Constrained beam sampling: require a bounded copy and forbid the
//! unbounded one, retrying until an output satisfies both.

use constrained_decoding::constraint::{satisfied, ConstraintSet};
use constrained_decoding::decode::{beam_sample, constrained_beam_sample, sample_until_satisfied, DecoderConfig};
use constrained_decoding::model::{LoadedModel, TokenizerMode};

const CORPUS: &[&str] = &[
    "char buf[16]; sprintf(buf, \"%s\", s); return buf;",
    "char buf[16]; sprintf(buf, \"%d\", n); return buf;",
    "char buf[16]; strcpy(buf, s); return buf;",
    "char buf[16]; snprintf(buf, sizeof buf, \"%s\", s); return buf;",
    "char buf[16]; strncpy(buf, s, sizeof buf - 1); return buf;",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lm = LoadedModel::ngram_from_corpus(CORPUS, TokenizerMode::Whitespace, 3, 0.0)?;
    let tok = &lm.tokenizer;
    let prompt = tok.tokenize("char buf[16];")?;
    let config = DecoderConfig { beam_width: 8, max_new_tokens: 16, ..DecoderConfig::default() };

    println!("unconstrained beam sampling:");
    let mut beams = beam_sample(&lm.model, &prompt, &config)?;
    beams.dedup_by(|a, b| a.tokens == b.tokens);
    for h in &beams {
        println!("  {:>9.4}  {:?}", h.cum_logprob, tok.detokenize(&h.tokens)?);
    }

    let constraints = ConstraintSet::from_texts(&[" snprintf(buf,"], &[" sprintf(buf,", " strcpy(buf,"], tok)?;
    println!("with positives {:?} and negatives {:?}:", [" snprintf(buf,"], [" sprintf(buf,", " strcpy(buf,"]);
    let (best, drawn) = sample_until_satisfied(30, |round| {
        constrained_beam_sample(&lm.model, tok, &prompt, &constraints, &config.with_seed(round as u64))
    })?;
    println!("  {:>9.4}  {:?}  (after {drawn} outputs)", best.cum_logprob, best.text);
    assert!(satisfied(&best.text, &constraints));
    Ok(())
}
