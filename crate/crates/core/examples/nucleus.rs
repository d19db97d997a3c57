//! Top-p filtering of one next-token distribution, then a few sampled
//! completions at the default temperature and nucleus mass.

use constrained_decoding::decode::{apply_temperature, nucleus_filter, nucleus_sample, nucleus_support, DecoderConfig};
use constrained_decoding::model::{LoadedModel, ScoredModel, TokenizerMode};

const CORPUS: &[&str] = &[
    "if (n < size) buf[n] = c;",
    "if (n >= 0 && n < size) buf[n] = c;",
    "if (n <= size) buf[n] = c;",
    "if (p != NULL) free(p);",
    "if (p) free(p);",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lm = LoadedModel::ngram_from_corpus(CORPUS, TokenizerMode::Whitespace, 2, 0.05)?;
    let vocab = lm.tokenizer.vocabulary();
    let prompt = lm.tokenizer.tokenize("if")?;

    let config = DecoderConfig::default();
    let dist = apply_temperature(&lm.model.next_log_probs(&prompt)?, config.temperature)?;
    let filtered = nucleus_filter(&dist, config.top_p);
    println!("nucleus at p = {} (temperature {}):", config.top_p, config.temperature);
    for t in nucleus_support(&dist, config.top_p) {
        println!("  {:>10?}  {:.4} -> {:.4}", vocab.token(t).unwrap_or("?"), dist.prob(t), filtered.prob(t));
    }

    for seed in 0..5 {
        let tokens = nucleus_sample(&lm.model, &prompt, &config.with_seed(seed))?;
        println!("seed {seed}: if{}", lm.tokenizer.detokenize(&tokens)?);
    }
    Ok(())
}
