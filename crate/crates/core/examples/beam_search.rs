//! Greedy decoding and beam search over a trigram model of a tiny C corpus.
//! Greedy commits to the likelier first token and ends on a less likely
//! sequence than the wider beams find.

use constrained_decoding::decode::{beam_search, greedy_decode, DecoderConfig};
use constrained_decoding::model::{sequence_logprob, LoadedModel, TokenizerMode};

const CORPUS: &[&str] = &[
    "x = malloc(n); if (!x) abort();",
    "x = malloc(n); memset(x, 0, n);",
    "x = malloc(n); x[0] = 0;",
    "x = calloc(1, n); return x;",
    "x = calloc(1, n); return x;",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lm = LoadedModel::ngram_from_corpus(CORPUS, TokenizerMode::Whitespace, 3, 0.0)?;
    let prompt = lm.tokenizer.tokenize("x =")?;

    for width in [1, 4, 25] {
        let config = DecoderConfig { beam_width: width, max_new_tokens: 16, ..DecoderConfig::default() };
        let tokens = if width == 1 {
            greedy_decode(&lm.model, &prompt, &config)?
        } else {
            beam_search(&lm.model, &prompt, &config)?
        };
        let logp = sequence_logprob(&lm.model, &prompt, &tokens)?;
        println!("B={width:>2}  log p = {logp:>8.4}  {:?}", lm.tokenizer.detokenize(&tokens)?);
    }
    Ok(())
}
