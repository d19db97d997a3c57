use std::collections::HashMap;

use super::{ModelError, TokenId};

/// Ordered list of distinct token strings with an optional end-of-sequence entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: Option<TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, ModelError> {
        if tokens.len() < 2 {
            return Err(ModelError::InvalidVocabulary(format!(
                "need at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), TokenId::from(i)).is_some() {
                return Err(ModelError::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index, eos: None })
    }

    /// Like [`Vocabulary::new`], marking `eos` (which must be one of `tokens`)
    /// as the end-of-sequence token.
    pub fn with_eos(tokens: Vec<String>, eos: &str) -> Result<Self, ModelError> {
        let mut vocab = Self::new(tokens)?;
        let id = vocab
            .id(eos)
            .ok_or_else(|| ModelError::InvalidVocabulary(format!("eos token {eos:?} missing")))?;
        vocab.eos = Some(id);
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_tiny() {
        assert!(Vocabulary::new(vec!["a".into()]).is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocabulary::with_eos(vec!["a".into(), "b".into()], "<eos>").is_err());
    }

    #[test]
    fn bijection() {
        let v = Vocabulary::with_eos(vec!["a".into(), "b".into(), "<eos>".into()], "<eos>").unwrap();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(TokenId::from(i)));
            assert_eq!(v.token(TokenId::from(i)), Some(t.as_str()));
        }
        assert_eq!(v.eos(), Some(TokenId(2)));
    }
}
