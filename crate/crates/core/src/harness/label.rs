use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{BenchmarkEntry, GenerationRecord, HarnessError, LabelRecord, SampleKey};
use crate::metrics::{ensemble_secure, SampleLabel, Verdict};

pub const NEGATIVES_STUB: &str = "negatives-stub";
pub const POSITIVES_STUB: &str = "positives-stub";

/// Labels toy generations by substring rules: a completion parses and
/// passes when it is non-blank; `negatives-stub` calls it secure when no
/// negative phrase occurs and `positives-stub` when every positive phrase
/// occurs.
pub fn label_stub(generations: &[GenerationRecord], benchmark: &[BenchmarkEntry]) -> Result<Vec<LabelRecord>, HarnessError> {
    let by_id: HashMap<&str, &BenchmarkEntry> = benchmark.iter().map(|e| (e.prompt_id.as_str(), e)).collect();
    generations
        .iter()
        .map(|g| {
            let entry = by_id
                .get(g.prompt_id.as_str())
                .ok_or_else(|| HarnessError::UnknownPrompt(g.prompt_id.clone()))?;
            let text = &g.completion_text;
            let ok = !text.trim().is_empty();
            let verdict = |secure: bool| if secure { Verdict::Secure } else { Verdict::Vulnerable };
            let mut analyzer_verdicts = BTreeMap::new();
            analyzer_verdicts.insert(
                NEGATIVES_STUB.to_string(),
                verdict(!entry.negatives.iter().any(|n| text.contains(n.as_str()))),
            );
            analyzer_verdicts.insert(
                POSITIVES_STUB.to_string(),
                verdict(entry.positives.iter().all(|p| text.contains(p.as_str()))),
            );
            Ok(LabelRecord {
                prompt_id: g.prompt_id.clone(),
                seed: g.seed,
                sample_index: g.sample_index,
                decoder_name: Some(g.decoder_name.clone()),
                parsed: ok,
                passed_tests: ok,
                analyzer_verdicts,
            })
        })
        .collect()
}

/// A generation joined with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub prompt_id: String,
    pub seed: u64,
    pub sample_index: usize,
    pub decoder_name: String,
    pub constraint_satisfied: bool,
    pub label: SampleLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JoinResult {
    pub labeled: Vec<LabeledSample>,
    /// Generations without a label, excluded from `labeled`.
    pub missing: Vec<SampleKey>,
}

/// Inner join of generations and labels on (prompt, seed, sample index,
/// decoder), applying the analyzer ensemble. A label without a decoder
/// name matches the one generation with its other key fields; it is an
/// error for such a label to match generations of two decoders. Every
/// label must match a generation.
pub fn label_join(generations: &[GenerationRecord], labels: &[LabelRecord]) -> Result<JoinResult, HarnessError> {
    let mut by_key: HashMap<SampleKey, &LabelRecord> = HashMap::with_capacity(labels.len());
    for l in labels {
        if by_key.insert(l.key(), l).is_some() {
            return Err(HarnessError::DuplicateKey(l.key()));
        }
    }
    let mut seen = HashSet::with_capacity(generations.len());
    let mut used = HashSet::new();
    let mut out = JoinResult::default();
    for g in generations {
        let key = g.key();
        if !seen.insert(key.clone()) {
            return Err(HarnessError::DuplicateKey(key));
        }
        let bare = key.without_decoder();
        let found = match by_key.get(&key) {
            Some(&l) => Some((key.clone(), l)),
            None => by_key.get(&bare).map(|&l| (bare.clone(), l)),
        };
        if let Some((k, _)) = &found {
            if !used.insert(k.clone()) {
                return Err(HarnessError::DuplicateKey(k.clone()));
            }
        }
        match found.map(|(_, l)| l) {
            Some(l) => {
                let secure = ensemble_secure(&l.analyzer_verdicts)?;
                let label = SampleLabel::new(l.parsed, l.passed_tests, secure, g.completion_text.clone())?;
                out.labeled.push(LabeledSample {
                    prompt_id: g.prompt_id.clone(),
                    seed: g.seed,
                    sample_index: g.sample_index,
                    decoder_name: g.decoder_name.clone(),
                    constraint_satisfied: g.constraint_satisfied,
                    label,
                });
            }
            None => {
                log::warn!("no label for generation {key}");
                out.missing.push(key);
            }
        }
    }
    if let Some(extra) = by_key.into_keys().filter(|k| !used.contains(k)).min() {
        return Err(HarnessError::UnknownLabel(extra));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::LanguageTag;

    fn generation(i: usize, text: &str) -> GenerationRecord {
        GenerationRecord {
            prompt_id: "p".into(),
            seed: 0,
            sample_index: i,
            decoder_name: "greedy".into(),
            completion_text: text.into(),
            constraint_satisfied: true,
            attempts_used: 2,
        }
    }

    fn entry() -> BenchmarkEntry {
        BenchmarkEntry {
            prompt_id: "p".into(),
            language_tag: LanguageTag::C,
            prompt_text: "x".into(),
            cwe_tag: "CWE-787".into(),
            positives: vec![" snprintf".into()],
            negatives: vec![" sprintf".into()],
        }
    }

    #[test]
    fn stub_and_join() {
        let gens = vec![generation(0, " snprintf(b)"), generation(1, " sprintf(b)"), generation(2, "  ")];
        let labels = label_stub(&gens, &[entry()]).unwrap();
        let joined = label_join(&gens, &labels[..2]).unwrap();
        assert_eq!(joined.labeled.len() + joined.missing.len(), gens.len());
        assert_eq!(joined.missing, vec![gens[2].key()]);
        assert!(joined.labeled[0].label.secure);
        assert!(!joined.labeled[1].label.secure);
        assert!(!labels[2].parsed);
    }

    #[test]
    fn vulnerable_verdict_and_bad_keys() {
        let gens = vec![generation(0, "a")];
        let mut l = label_stub(&gens, &[entry()]).unwrap();
        l[0].analyzer_verdicts = [("codeql".to_string(), Verdict::Vulnerable)].into_iter().collect();
        assert!(!label_join(&gens, &l).unwrap().labeled[0].label.secure);
        let mut extra = l.clone();
        extra[0].sample_index = 9;
        assert!(matches!(label_join(&gens, &extra), Err(HarnessError::UnknownLabel(_))));
        let dup = vec![l[0].clone(), l[0].clone()];
        assert!(matches!(label_join(&gens, &dup), Err(HarnessError::DuplicateKey(_))));
    }

    #[test]
    fn decoder_name_disambiguates_mixed_files() {
        let mut other = generation(0, "b");
        other.decoder_name = "beam".into();
        let gens = vec![generation(0, "a"), other];
        let labels = label_stub(&gens, &[entry()]).unwrap();
        let joined = label_join(&gens, &labels).unwrap();
        assert_eq!(joined.labeled.len(), 2);
        assert_eq!(joined.labeled[1].decoder_name, "beam");

        let mut bare = labels.clone();
        bare.iter_mut().for_each(|l| l.decoder_name = None);
        assert!(matches!(label_join(&gens, &bare[..1]), Err(HarnessError::DuplicateKey(_))));
        assert_eq!(label_join(&gens[..1], &bare[..1]).unwrap().labeled.len(), 1);
    }
}
