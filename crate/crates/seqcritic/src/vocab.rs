//! Token vocabulary with a reserved end-of-sequence entry.

use std::collections::HashMap;

use crate::error::{Result, SeqError};

pub type TokenId = usize;

pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token <-> id mapping. The end-of-sequence token is always present
/// (appended last); an unknown-token entry is optional and sits just before
/// it. Character tokens are ordered by codepoint, so two corpora with the
/// same character set produce identical vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
    unk: Option<TokenId>,
}

impl Vocab {
    /// Build from a set of characters; sorts by codepoint, then appends
    /// `<unk>` (if requested) and `<eos>`.
    pub fn from_chars(chars: impl IntoIterator<Item = char>, with_unk: bool) -> Result<Vocab> {
        let mut cs: Vec<char> = chars.into_iter().collect();
        cs.sort_unstable();
        cs.dedup();
        if cs.is_empty() {
            return Err(SeqError::Vocab("empty character set".into()));
        }
        let mut tokens: Vec<String> = cs.into_iter().map(String::from).collect();
        if with_unk {
            tokens.push(UNK_TOKEN.into());
        }
        tokens.push(EOS_TOKEN.into());
        Vocab::from_tokens(tokens)
    }

    /// Build from an explicit ordered token list containing `<eos>` exactly once.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(SeqError::Vocab(format!("duplicate token `{t}`")));
            }
        }
        let eos = *index
            .get(EOS_TOKEN)
            .ok_or_else(|| SeqError::Vocab(format!("missing `{EOS_TOKEN}` token")))?;
        let unk = index.get(UNK_TOKEN).copied();
        Ok(Vocab {
            tokens,
            index,
            eos,
            unk,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> Option<TokenId> {
        self.unk
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(SeqError::UnknownTokenId {
                id,
                size: self.tokens.len(),
            })
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Character-wise encoding; unknown characters map to `<unk>` when present.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.chars()
            .map(|c| {
                let s = c.to_string();
                match self.index.get(&s) {
                    Some(&id) => Ok(id),
                    None => self.unk.ok_or(SeqError::UnknownToken(s)),
                }
            })
            .collect()
    }

    /// Inverse of `encode` for in-vocabulary ids; skips nothing.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            out.push_str(self.token(id)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chars_are_sorted_and_eos_last() {
        let v = Vocab::from_chars("abcab".chars(), false).unwrap();
        assert_eq!(v.tokens(), &["a", "b", "c", EOS_TOKEN]);
        assert_eq!(v.eos(), 3);
        assert_eq!(v.unk(), None);
    }

    #[test]
    fn round_trip_is_identity() {
        let v = Vocab::from_chars("hello world".chars(), true).unwrap();
        let ids = v.encode("hello world").unwrap();
        assert_eq!(v.decode(&ids).unwrap(), "hello world");
    }

    #[test]
    fn same_charset_same_vocab() {
        let a = Vocab::from_chars("abcab".chars(), true).unwrap();
        let b = Vocab::from_chars("cccbbaa".chars(), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_char_maps_to_unk_or_errors() {
        let with = Vocab::from_chars("ab".chars(), true).unwrap();
        assert_eq!(with.encode("abz").unwrap()[2], with.unk().unwrap());
        let without = Vocab::from_chars("ab".chars(), false).unwrap();
        assert!(without.encode("abz").is_err());
    }

    #[test]
    fn eos_must_be_present_exactly_once() {
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        assert!(
            Vocab::from_tokens(vec![EOS_TOKEN.into(), EOS_TOKEN.into()]).is_err()
        );
    }
}
