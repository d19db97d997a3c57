//! Energy-based decoding with Langevin dynamics on a small random
//! embedding model: push a keyword into the output and keep another out.

use constrained_decoding::constraint::ConstraintSet;
use constrained_decoding::ebm::{mucola_decode_traced, MucolaConfig};
use constrained_decoding::model::{LoadedModel, Tokenizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let words = "int n = len ; if ( n < size ) memcpy ( dst , src , n ) ; else return -1 ;";
    let tokenizer = Tokenizer::whitespace_from_corpus([words])?;
    let lm = LoadedModel::random_embedding_lm(tokenizer, 8, 4, 1.0, 7);
    let model = lm.model.as_differentiable().expect("embedding model");
    let tok = &lm.tokenizer;

    let prompt = tok.tokenize("int n = len ;")?;
    let constraints = ConstraintSet::from_texts(&[" size"], &[" memcpy"], tok)?;
    let base = MucolaConfig { output_len: 8, max_iters: 200, ..MucolaConfig::default() };

    for seed in 0..5 {
        let (out, trace) = mucola_decode_traced(model, tok, &prompt, &constraints, &base.with_seed(seed))?;
        let last = trace.last().expect("at least one iteration");
        println!(
            "seed {seed}: satisfied={} iters={:>3} nll {:.3} -> {:.3} lambda={:?}  {:?}",
            out.satisfied, out.iterations_used, out.initial_nll, out.final_nll, last.lambdas_after, out.text
        );
    }
    Ok(())
}
