#![allow(dead_code)]

use std::path::Path;

use constrained_decoding::constraint::ConstraintRecord;
use constrained_decoding::harness::{self, LanguageTag, PromptRecord};
use constrained_decoding::model::{LoadedModel, ModelError, NextTokenDistribution, ScoredModel, TokenId, TokenizerMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Model whose next-token distribution is a fixed random function of the
/// last `order` context tokens. Token `vocab - 1` is end-of-sequence.
#[derive(Debug, Clone)]
pub struct RandomTableModel {
    pub vocab: usize,
    pub order: usize,
    pub seed: u64,
    /// Logit spread; larger is peakier.
    pub spread: f64,
    /// Draw logits from a few levels so that exact ties occur.
    pub quantized: bool,
}

impl RandomTableModel {
    fn context_seed(&self, context: &[TokenId]) -> u64 {
        let start = context.len().saturating_sub(self.order);
        context[start..]
            .iter()
            .fold(self.seed ^ 0x5151_7a7a, |h, t| (h ^ (t.0 as u64 + 1)).wrapping_mul(0x0100_0000_01b3))
    }

    pub fn probs(&self, context: &[TokenId]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.context_seed(context));
        let logits: Vec<f64> = (0..self.vocab)
            .map(|_| {
                if self.quantized {
                    rng.random_range(0..3) as f64 * self.spread
                } else {
                    rng.random_range(-1.0..1.0) * self.spread
                }
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }
}

impl ScoredModel for RandomTableModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn eos(&self) -> Option<TokenId> {
        Some(TokenId::from(self.vocab - 1))
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution, ModelError> {
        NextTokenDistribution::from_probs(self.probs(context))
    }
}

pub const C_CORPUS: &[&str] = &[
    "char buf[16]; snprintf(buf, sizeof buf, \"%s\", s); return 0;",
    "char buf[16]; sprintf(buf, \"%s\", s); return 0;",
    "char buf[16]; strncpy(buf, s, sizeof buf - 1); return 0;",
    "char buf[16]; strcpy(buf, s); return 0;",
    "if (i >= 0 && i < n) a[i] = v;",
    "a[i] = v;",
    "if (b == 0) return -1; return a / b;",
    "return a / b;",
    "free(p); p = NULL;",
    "free(p); free(p);",
    "p = malloc(n); if (p == NULL) return -1;",
    "p = malloc(n); memset(p, 0, n);",
    "fd = open(path, O_RDONLY); if (fd < 0) return -1;",
    "n = read(fd, buf, sizeof buf); if (n < 0) return -1;",
];

/// `(prompt, positives, negatives)` cases over [`C_CORPUS`].
pub const CONSTRAINED_CASES: &[(&str, &[&str], &[&str])] = &[
    ("char buf[16];", &["snprintf"], &["sprintf(buf, \""]),
    ("char buf[16];", &["strncpy"], &["strcpy"]),
    ("char buf[16];", &["sizeof buf"], &[]),
    ("char buf[16];", &[], &["strcpy", "sprintf(buf, \""]),
    ("if (", &["i >= 0"], &[]),
    ("a[i]", &[" = v;"], &[]),
    ("if (b", &["== 0"], &[]),
    ("return a", &[" / b;"], &[]),
    ("free(p);", &["NULL"], &["free(p); free(p)"]),
    ("free(p);", &[], &[" free("]),
    ("p = malloc(n);", &["NULL"], &[]),
    ("p = malloc(n);", &["memset"], &["return"]),
    ("fd = open(path,", &["< 0"], &[]),
    ("n = read(fd,", &["sizeof buf"], &[]),
    ("n = read(fd,", &["return -1"], &["a[i]"]),
    ("char", &["buf"], &["strcpy"]),
    ("p", &["malloc"], &[]),
    ("if", &["return"], &["free"]),
    ("return", &[" 0;"], &[]),
    ("char buf[16]; s", &["n"], &["strcpy", "sprintf"]),
];

pub fn byte_model() -> LoadedModel {
    LoadedModel::ngram_from_corpus(C_CORPUS, TokenizerMode::ByteLevel, 4, 0.0).expect("corpus trains")
}

pub fn whitespace_model() -> LoadedModel {
    LoadedModel::ngram_from_corpus(C_CORPUS, TokenizerMode::Whitespace, 3, 0.1).expect("corpus trains")
}

fn prompt(id: &str, text: &str, cwe: &str) -> PromptRecord {
    PromptRecord { prompt_id: id.into(), language_tag: LanguageTag::C, prompt_text: text.into(), cwe_tag: cwe.into() }
}

fn constraint(id: &str, positives: &[&str], negatives: &[&str]) -> ConstraintRecord {
    ConstraintRecord {
        prompt_id: id.into(),
        positives: positives.iter().map(|s| s.to_string()).collect(),
        negatives: negatives.iter().map(|s| s.to_string()).collect(),
        templates: Vec::new(),
    }
}

/// Writes `prompts.jsonl`, `constraints.jsonl` and `model.json` (a whitespace
/// trigram model over [`C_CORPUS`]) into `dir`.
pub fn write_toy_benchmark(dir: &Path) {
    let prompts = vec![
        prompt("cwe-787-copy", "char buf[16];", "CWE-787"),
        prompt("cwe-125-put", "a[i]", "CWE-125"),
        prompt("cwe-369-div", "if (b", "CWE-369"),
        prompt("cwe-415-free", "free(p);", "CWE-415"),
        prompt("cwe-476-alloc", "p = malloc(n);", "CWE-476"),
    ];
    let constraints = vec![
        constraint("cwe-787-copy", &[" snprintf(buf,"], &[" sprintf(buf,", " strcpy(buf,"]),
        constraint("cwe-369-div", &[" =="], &[]),
        constraint("cwe-415-free", &[" NULL;"], &[" free(p);"]),
        constraint("cwe-476-alloc", &[" NULL)"], &[]),
    ];
    harness::write_jsonl(dir.join("prompts.jsonl"), &prompts).unwrap();
    harness::write_jsonl(dir.join("constraints.jsonl"), &constraints).unwrap();
    whitespace_model().save(dir.join("model.json")).unwrap();
}
