use std::collections::BTreeMap;

use super::{ConstraintError, PhraseConstraint, Polarity};
use crate::model::Tokenizer;

/// A phrase with named holes such as `"if ({i} >= 0 && {i} < {size})"`.
///
/// A hole is `{name}` where `name` is an identifier; any other brace is
/// literal text.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateConstraint {
    pub template: String,
    pub bindings: BTreeMap<String, String>,
}

enum Piece<'a> {
    Literal(&'a str),
    Hole(&'a str),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_identifier(&after[..close]) => {
                if open > 0 {
                    out.push(Piece::Literal(&rest[..open]));
                }
                out.push(Piece::Hole(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Piece::Literal(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Literal(rest));
    }
    out
}

impl TemplateConstraint {
    pub fn new(template: impl Into<String>, bindings: BTreeMap<String, String>) -> Self {
        Self { template: template.into(), bindings }
    }

    /// Names of the holes in order of first appearance.
    pub fn holes(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for p in pieces(&self.template) {
            if let Piece::Hole(h) = p {
                if !seen.contains(&h) {
                    seen.push(h);
                }
            }
        }
        seen
    }

    /// Literal substitution of every binding.
    pub fn render(&self) -> Result<String, ConstraintError> {
        let mut out = String::with_capacity(self.template.len());
        for p in pieces(&self.template) {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Hole(h) => out.push_str(
                    self.bindings.get(h).ok_or_else(|| ConstraintError::UnboundHole(h.to_string()))?,
                ),
            }
        }
        Ok(out)
    }

    pub fn instantiate(&self, polarity: Polarity, tokenizer: &Tokenizer) -> Result<PhraseConstraint, ConstraintError> {
        PhraseConstraint::new(self.render()?, polarity, tokenizer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn bound_check_template() {
        let t = TemplateConstraint::new("if ({i} >= 0 && {i} < {size})", bind(&[("i", "index"), ("size", "size")]));
        assert_eq!(t.render().unwrap(), "if (index >= 0 && index < size)");
        assert_eq!(t.holes(), ["i", "size"]);
        let phrase = t.instantiate(Polarity::Positive, &Tokenizer::byte_level()).unwrap();
        assert_eq!(phrase.text(), "if (index >= 0 && index < size)");
    }

    #[test]
    fn no_holes_is_identity() {
        let t = TemplateConstraint::new(" snprintf", BTreeMap::new());
        assert_eq!(t.render().unwrap(), " snprintf");
        let braces = TemplateConstraint::new("{ x } {1} {", BTreeMap::new());
        assert_eq!(braces.render().unwrap(), "{ x } {1} {");
    }

    #[test]
    fn unbound_hole() {
        let t = TemplateConstraint::new("if ({i} >= 0 && {i} < {size})", bind(&[("i", "index")]));
        assert_eq!(t.render(), Err(ConstraintError::UnboundHole("size".into())));
    }
}
