use std::collections::BTreeMap;
use std::path::Path;

use super::io::read_jsonl_numbered;
use super::{BenchmarkEntry, HarnessError, PromptRecord};
use crate::constraint::ConstraintRecord;

/// Joins prompts with their constraint records. Prompts without a record get
/// no constraints; a record naming an unknown prompt is an error.
pub fn ingest(prompts_path: impl AsRef<Path>, constraints_path: Option<&Path>) -> Result<Vec<BenchmarkEntry>, HarnessError> {
    let prompts_path = prompts_path.as_ref();
    let prompts = read_jsonl_numbered::<PromptRecord>(prompts_path)?;
    let constraints = match constraints_path {
        Some(p) => read_jsonl_numbered::<ConstraintRecord>(p)?,
        None => Vec::new(),
    };
    let constraints_name = constraints_path.map(|p| p.display().to_string()).unwrap_or_default();
    ingest_records(&prompts, &prompts_path.display().to_string(), &constraints, &constraints_name)
}

/// [`ingest`] over already-parsed `(line, record)` pairs.
pub fn ingest_records(
    prompts: &[(usize, PromptRecord)],
    prompts_name: &str,
    constraints: &[(usize, ConstraintRecord)],
    constraints_name: &str,
) -> Result<Vec<BenchmarkEntry>, HarnessError> {
    let parse_err = |file: &str, line: usize, message: String| HarnessError::Parse { file: file.to_string(), line, message };

    let mut index = BTreeMap::new();
    let mut entries = Vec::with_capacity(prompts.len());
    for (line, p) in prompts {
        if p.prompt_text.is_empty() {
            return Err(parse_err(prompts_name, *line, format!("prompt {:?} has empty prompt_text", p.prompt_id)));
        }
        if index.insert(p.prompt_id.clone(), entries.len()).is_some() {
            return Err(parse_err(prompts_name, *line, format!("duplicate prompt_id {:?}", p.prompt_id)));
        }
        entries.push(BenchmarkEntry {
            prompt_id: p.prompt_id.clone(),
            language_tag: p.language_tag,
            prompt_text: p.prompt_text.clone(),
            cwe_tag: p.cwe_tag.clone(),
            positives: Vec::new(),
            negatives: Vec::new(),
        });
    }

    let mut seen = BTreeMap::new();
    for (line, rec) in constraints {
        let Some(&i) = index.get(&rec.prompt_id) else {
            return Err(HarnessError::DanglingConstraint(rec.prompt_id.clone()));
        };
        if seen.insert(rec.prompt_id.clone(), *line).is_some() {
            return Err(parse_err(constraints_name, *line, format!("second constraint record for {:?}", rec.prompt_id)));
        }
        let (positives, negatives) = rec
            .phrase_texts()
            .map_err(|e| parse_err(constraints_name, *line, e.to_string()))?;
        entries[i].positives = positives;
        entries[i].negatives = negatives;
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::LanguageTag;

    fn prompt(id: &str) -> PromptRecord {
        PromptRecord { prompt_id: id.into(), language_tag: LanguageTag::C, prompt_text: "int main() {".into(), cwe_tag: "CWE-787".into() }
    }

    fn constraint(id: &str, line: &str) -> ConstraintRecord {
        let mut r: ConstraintRecord = serde_json::from_str(line).unwrap();
        r.prompt_id = id.into();
        r
    }

    #[test]
    fn joins_and_defaults() {
        let prompts = vec![(1, prompt("a")), (2, prompt("b"))];
        let cons = vec![(1, constraint("b", r#"{"prompt_id":"","positives":[" snprintf"],"templates":[{"text":" if ({i} < {n})","bindings":{"i":"k","n":"len"}}]}"#))];
        let out = ingest_records(&prompts, "p", &cons, "c").unwrap();
        assert!(!out[0].has_constraints());
        assert_eq!(out[1].positives, vec![" snprintf".to_string(), " if (k < len)".to_string()]);
    }

    #[test]
    fn errors() {
        let dup = vec![(1, prompt("a")), (2, prompt("a"))];
        assert!(matches!(ingest_records(&dup, "p", &[], "c"), Err(HarnessError::Parse { line: 2, .. })));
        let prompts = vec![(1, prompt("a"))];
        let cons = vec![(1, constraint("zzz", r#"{"prompt_id":""}"#))];
        assert!(matches!(ingest_records(&prompts, "p", &cons, "c"), Err(HarnessError::DanglingConstraint(id)) if id == "zzz"));
        let mut empty = prompt("e");
        empty.prompt_text.clear();
        assert!(matches!(ingest_records(&[(4, empty)], "p", &[], "c"), Err(HarnessError::Parse { line: 4, .. })));
    }
}
