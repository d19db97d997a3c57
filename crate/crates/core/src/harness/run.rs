use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchmarkEntry, GenerationRecord, HarnessError, RunFailure};
use crate::constraint::{ConstraintSet, PhraseConstraint, Polarity};
use crate::decode::{beam_sample, beam_search, constrained_beam_sample, greedy_decode, nucleus_sample, DecoderConfig};
use crate::ebm::{mucola_decode, MucolaConfig};
use crate::model::{LoadedModel, TokenId, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Greedy,
    Beam,
    Nucleus,
    BeamSample,
    ConstrainedBeam,
    Mucola,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 6] = [
        DecoderKind::Greedy,
        DecoderKind::Beam,
        DecoderKind::Nucleus,
        DecoderKind::BeamSample,
        DecoderKind::ConstrainedBeam,
        DecoderKind::Mucola,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Greedy => "greedy",
            DecoderKind::Beam => "beam",
            DecoderKind::Nucleus => "nucleus",
            DecoderKind::BeamSample => "beam-sample",
            DecoderKind::ConstrainedBeam => "constrained-beam",
            DecoderKind::Mucola => "mucola",
        }
    }

    /// Decoders that regenerate until outputs satisfy the constraints.
    pub fn is_constrained(self) -> bool {
        matches!(self, DecoderKind::ConstrainedBeam | DecoderKind::Mucola)
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown decoder {s:?}; expected one of greedy, beam, nucleus, beam-sample, constrained-beam, mucola"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub decoder: DecoderKind,
    pub samples_per_prompt: usize,
    pub seeds: Vec<u64>,
    /// Maximum outputs drawn per (prompt, seed) by the constrained decoders.
    pub retry_cap: usize,
    pub decoding: DecoderConfig,
    pub mucola: MucolaConfig,
}

impl RunConfig {
    /// 10 samples per prompt; seeds `0..10` (`0..5` for the energy decoder);
    /// at most 100 outputs for constrained beam sampling and 30 for the
    /// energy decoder.
    pub fn new(decoder: DecoderKind) -> Self {
        let (seeds, retry_cap) = match decoder {
            DecoderKind::Mucola => (5, 30),
            DecoderKind::ConstrainedBeam => (10, 100),
            _ => (10, 10),
        };
        Self {
            decoder,
            samples_per_prompt: 10,
            seeds: (0..seeds).collect(),
            retry_cap,
            decoding: DecoderConfig::default(),
            mucola: MucolaConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.samples_per_prompt == 0 {
            return Err(HarnessError::InvalidConfig("samples_per_prompt must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("at least one seed is required".into()));
        }
        if self.decoder.is_constrained() && self.retry_cap < self.samples_per_prompt {
            return Err(HarnessError::InvalidConfig(format!(
                "retry cap {} is below samples_per_prompt {}",
                self.retry_cap, self.samples_per_prompt
            )));
        }
        self.decoding.validate()?;
        self.mucola.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub records: Vec<GenerationRecord>,
    pub failures: Vec<RunFailure>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Decoder seed for one attempt of one (prompt, seed) group.
pub fn attempt_seed(seed: u64, prompt_id: &str, attempt: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(prompt_id)) ^ attempt)
}

/// Tokenizes every phrase the tokenizer can represent. Phrases it cannot
/// represent stay in the text-level check only.
pub fn decoding_constraints(entry: &BenchmarkEntry, tokenizer: &Tokenizer) -> ConstraintSet {
    let build = |texts: &[String], polarity| -> Vec<PhraseConstraint> {
        texts
            .iter()
            .filter_map(|t| match PhraseConstraint::new(t.clone(), polarity, tokenizer) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("prompt {}: phrase {t:?} is not representable: {e}", entry.prompt_id);
                    None
                }
            })
            .collect()
    };
    ConstraintSet::new(build(&entry.positives, Polarity::Positive), build(&entry.negatives, Polarity::Negative))
        .expect("polarities are assigned by construction")
}

/// Runs the configured decoder over every (prompt, seed) pair. Output is
/// ordered by prompt, then seed, then sample index, regardless of how the
/// pairs are scheduled across threads.
pub fn run(config: &RunConfig, benchmark: &[BenchmarkEntry], model: &LoadedModel) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    if config.decoder == DecoderKind::Mucola && model.model.as_differentiable().is_none() {
        return Err(HarnessError::NotDifferentiable);
    }
    let jobs: Vec<(&BenchmarkEntry, u64)> =
        benchmark.iter().flat_map(|e| config.seeds.iter().map(move |&s| (e, s))).collect();
    let results: Vec<Result<Vec<GenerationRecord>, RunFailure>> = jobs
        .par_iter()
        .map(|&(entry, seed)| {
            run_group(config, entry, seed, model).map_err(|e| {
                log::warn!("prompt {} seed {seed}: {e}", entry.prompt_id);
                RunFailure { prompt_id: entry.prompt_id.clone(), seed, message: e.to_string() }
            })
        })
        .collect();
    let mut out = RunOutput::default();
    for r in results {
        match r {
            Ok(records) => out.records.extend(records),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

struct Drawn {
    text: String,
    satisfied: bool,
}

fn run_group(config: &RunConfig, entry: &BenchmarkEntry, seed: u64, model: &LoadedModel) -> Result<Vec<GenerationRecord>, HarnessError> {
    let tokenizer = &model.tokenizer;
    let lm = &model.model;
    let prompt = tokenizer.tokenize(&entry.prompt_text)?;
    let samples = config.samples_per_prompt;
    let cfg = |attempt: u64| config.decoding.with_seed(attempt_seed(seed, &entry.prompt_id, attempt));
    let draw = |tokens: &[TokenId]| -> Result<Drawn, HarnessError> {
        let text = tokenizer.detokenize(tokens)?;
        Ok(Drawn { satisfied: entry.satisfied_by(&text), text })
    };

    let mut drawn: Vec<Drawn> = Vec::new();
    match config.decoder {
        DecoderKind::Greedy => {
            let d = draw(&greedy_decode(lm, &prompt, &config.decoding)?)?;
            drawn.extend((0..samples).map(|_| Drawn { text: d.text.clone(), satisfied: d.satisfied }));
        }
        DecoderKind::Beam => {
            let d = draw(&beam_search(lm, &prompt, &config.decoding)?)?;
            drawn.extend((0..samples).map(|_| Drawn { text: d.text.clone(), satisfied: d.satisfied }));
        }
        DecoderKind::Nucleus => {
            for i in 0..samples {
                drawn.push(draw(&nucleus_sample(lm, &prompt, &cfg(i as u64))?)?);
            }
        }
        DecoderKind::BeamSample => {
            let mut attempt = 0;
            while drawn.len() < samples {
                for h in beam_sample(lm, &prompt, &cfg(attempt))? {
                    if drawn.len() < samples {
                        drawn.push(draw(&h.tokens)?);
                    }
                }
                attempt += 1;
            }
        }
        DecoderKind::ConstrainedBeam => {
            let set = decoding_constraints(entry, tokenizer);
            let mut attempt = 0;
            'draw: loop {
                for o in constrained_beam_sample(lm, tokenizer, &prompt, &set, &cfg(attempt))? {
                    drawn.push(Drawn { satisfied: entry.satisfied_by(&o.text), text: o.text });
                    if enough(&drawn, samples, config.retry_cap) {
                        break 'draw;
                    }
                }
                attempt += 1;
            }
        }
        DecoderKind::Mucola => {
            let diff = lm.as_differentiable().ok_or(HarnessError::NotDifferentiable)?;
            let set = decoding_constraints(entry, tokenizer);
            let mut attempt = 0;
            loop {
                let mcfg = config.mucola.with_seed(attempt_seed(seed, &entry.prompt_id, attempt));
                let o = mucola_decode(diff, tokenizer, &prompt, &set, &mcfg)?;
                drawn.push(Drawn { satisfied: entry.satisfied_by(&o.text), text: o.text });
                if enough(&drawn, samples, config.retry_cap) {
                    break;
                }
                attempt += 1;
            }
        }
    }

    let attempts_used = drawn.len();
    let ordered: Vec<Drawn> = if config.decoder.is_constrained() {
        let (sat, unsat): (Vec<Drawn>, Vec<Drawn>) = drawn.into_iter().partition(|d| d.satisfied);
        sat.into_iter().chain(unsat).take(samples).collect()
    } else {
        drawn
    };
    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(i, d)| GenerationRecord {
            prompt_id: entry.prompt_id.clone(),
            seed,
            sample_index: i,
            decoder_name: config.decoder.name().to_string(),
            completion_text: d.text,
            constraint_satisfied: d.satisfied,
            attempts_used,
        })
        .collect())
}

fn enough(drawn: &[Drawn], samples: usize, cap: usize) -> bool {
    drawn.len() >= cap || drawn.iter().filter(|d| d.satisfied).count() >= samples
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoder_names_round_trip() {
        for d in DecoderKind::ALL {
            assert_eq!(d.name().parse::<DecoderKind>().unwrap(), d);
            assert_eq!(serde_json::to_string(&d).unwrap(), format!("\"{}\"", d.name()));
        }
        assert!("topk".parse::<DecoderKind>().is_err());
    }

    #[test]
    fn protocol_defaults() {
        let c = RunConfig::new(DecoderKind::ConstrainedBeam);
        assert_eq!((c.samples_per_prompt, c.seeds.len(), c.retry_cap), (10, 10, 100));
        let m = RunConfig::new(DecoderKind::Mucola);
        assert_eq!((m.seeds.len(), m.retry_cap), (5, 30));
        let bad = RunConfig { retry_cap: 3, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(attempt_seed(0, "a", 0), attempt_seed(0, "b", 0));
        assert_ne!(attempt_seed(0, "a", 0), attempt_seed(1, "a", 0));
        assert_ne!(attempt_seed(0, "a", 0), attempt_seed(0, "a", 1));
        assert_eq!(attempt_seed(3, "x", 2), attempt_seed(3, "x", 2));
    }
}
