use serde::{Deserialize, Serialize};

use super::{ModelError, TokenId, TokenizeError, Vocabulary};

pub const EOS_TOKEN: &str = "<eos>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    /// One token per UTF-8 byte; every string is representable.
    ByteLevel,
    /// One token per non-whitespace run together with the whitespace that
    /// precedes it (so `" snprintf"` is a single token). A trailing
    /// whitespace run is its own token.
    Whitespace,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocabulary,
    mode: TokenizerMode,
    // byte value -> token id, byte-level mode only
    byte_ids: Vec<TokenId>,
}

fn byte_name(b: u8) -> String {
    if (0x20..0x7f).contains(&b) {
        (b as char).to_string()
    } else {
        format!("<0x{b:02X}>")
    }
}

fn parse_byte_name(name: &str) -> Option<u8> {
    if name.len() == 1 && (0x20..0x7f).contains(&name.as_bytes()[0]) {
        return Some(name.as_bytes()[0]);
    }
    let hex = name.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok().filter(|b| !(0x20..0x7f).contains(b))
}

/// Splits text into whitespace-mode pieces, returning `(offset, piece)`.
fn whitespace_pieces(text: &str) -> Vec<(usize, &str)> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut seen_non_ws = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if seen_non_ws {
                pieces.push((start, &text[start..i]));
                start = i;
                seen_non_ws = false;
            }
        } else {
            seen_non_ws = true;
        }
    }
    if start < text.len() {
        pieces.push((start, &text[start..]));
    }
    pieces
}

impl Tokenizer {
    /// 256 byte tokens followed by `<eos>`.
    pub fn byte_level() -> Self {
        let mut tokens: Vec<String> = (0..=255u8).map(byte_name).collect();
        tokens.push(EOS_TOKEN.to_string());
        let vocab = Vocabulary::with_eos(tokens, EOS_TOKEN).expect("byte vocabulary is valid");
        Self::from_vocabulary(vocab, TokenizerMode::ByteLevel).expect("byte vocabulary is complete")
    }

    /// Whitespace tokenizer whose vocabulary is every piece occurring in
    /// `corpus` (in first-seen order), plus `<eos>`.
    pub fn whitespace_from_corpus<'a, I>(corpus: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut tokens: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for text in corpus {
            for (_, piece) in whitespace_pieces(text) {
                if seen.insert(piece.to_string()) {
                    tokens.push(piece.to_string());
                }
            }
        }
        if !seen.contains(EOS_TOKEN) {
            tokens.push(EOS_TOKEN.to_string());
        }
        let vocab = Vocabulary::with_eos(tokens, EOS_TOKEN)?;
        Self::from_vocabulary(vocab, TokenizerMode::Whitespace)
    }

    pub fn from_vocabulary(vocab: Vocabulary, mode: TokenizerMode) -> Result<Self, ModelError> {
        let mut byte_ids = Vec::new();
        if mode == TokenizerMode::ByteLevel {
            byte_ids = vec![TokenId(u32::MAX); 256];
            let mut found = 0;
            for (i, t) in vocab.tokens().iter().enumerate() {
                if let Some(b) = parse_byte_name(t) {
                    byte_ids[b as usize] = TokenId::from(i);
                    found += 1;
                }
            }
            if found != 256 {
                return Err(ModelError::InvalidVocabulary(format!(
                    "byte-level vocabulary covers {found} of 256 bytes"
                )));
            }
        }
        Ok(Self { vocab, mode, byte_ids })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.vocab.eos()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, TokenizeError> {
        match self.mode {
            TokenizerMode::ByteLevel => Ok(text.bytes().map(|b| self.byte_ids[b as usize]).collect()),
            TokenizerMode::Whitespace => whitespace_pieces(text)
                .into_iter()
                .map(|(offset, piece)| {
                    self.vocab
                        .id(piece)
                        .filter(|&id| Some(id) != self.vocab.eos())
                        .ok_or_else(|| TokenizeError::UnsupportedCharacter {
                            piece: piece.to_string(),
                            offset,
                        })
                })
                .collect(),
        }
    }

    /// Inverse of [`Tokenizer::tokenize`]. The end-of-sequence token renders
    /// as the empty string.
    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<String, TokenizeError> {
        let eos = self.vocab.eos();
        match self.mode {
            TokenizerMode::ByteLevel => {
                let mut bytes = Vec::with_capacity(tokens.len());
                for &t in tokens {
                    if Some(t) == eos {
                        continue;
                    }
                    let name = self.vocab.token(t).ok_or(TokenizeError::InvalidToken(t))?;
                    bytes.push(parse_byte_name(name).ok_or(TokenizeError::InvalidToken(t))?);
                }
                Ok(String::from_utf8_lossy(&bytes).into_owned())
            }
            TokenizerMode::Whitespace => {
                let mut out = String::new();
                for &t in tokens {
                    if Some(t) == eos {
                        continue;
                    }
                    out.push_str(self.vocab.token(t).ok_or(TokenizeError::InvalidToken(t))?);
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        assert!(Tokenizer::byte_level().tokenize("").unwrap().is_empty());
        let ws = Tokenizer::whitespace_from_corpus(["a b"]).unwrap();
        assert!(ws.tokenize("").unwrap().is_empty());
    }

    #[test]
    fn byte_level_lengths() {
        let t = Tokenizer::byte_level();
        assert_eq!(t.tokenize("abc").unwrap().len(), 3);
        assert_eq!(t.vocabulary().len(), 257);
        let s = "if (i >= 0)";
        assert_eq!(t.detokenize(&t.tokenize(s).unwrap()).unwrap(), s);
    }

    #[test]
    fn whitespace_pieces_keep_leading_space() {
        let t = Tokenizer::whitespace_from_corpus(["if (i >= 0)", "x = snprintf(buf)"]).unwrap();
        let ids = t.tokenize("if (i >= 0)").unwrap();
        let pieces: Vec<&str> = ids.iter().map(|&i| t.vocabulary().token(i).unwrap()).collect();
        assert_eq!(pieces, ["if", " (i", " >=", " 0)"]);
        assert_eq!(t.detokenize(&ids).unwrap(), "if (i >= 0)");
    }

    #[test]
    fn whitespace_unsupported() {
        let t = Tokenizer::whitespace_from_corpus(["a b"]).unwrap();
        assert_eq!(
            t.tokenize("a c"),
            Err(TokenizeError::UnsupportedCharacter { piece: " c".into(), offset: 1 })
        );
    }

    #[test]
    fn eos_detokenizes_empty() {
        let t = Tokenizer::byte_level();
        let mut ids = t.tokenize("ok").unwrap();
        ids.push(t.eos().unwrap());
        assert_eq!(t.detokenize(&ids).unwrap(), "ok");
    }

    proptest! {
        #[test]
        fn byte_round_trip(s in "\\PC*") {
            let t = Tokenizer::byte_level();
            prop_assert_eq!(t.detokenize(&t.tokenize(&s).unwrap()).unwrap(), s);
        }

        #[test]
        fn whitespace_round_trip(s in "[ a-z\n\t(){};=<>&]{0,40}") {
            let t = Tokenizer::whitespace_from_corpus([s.as_str(), "pad"]).unwrap();
            prop_assert_eq!(t.detokenize(&t.tokenize(&s).unwrap()).unwrap(), s);
        }
    }
}
