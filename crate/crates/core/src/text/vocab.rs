use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{file_error, invalid, Result};

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const RESERVED: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "UNK";

/// Token/id map with reserved ids `PAD=0`, `EOS=1`, `UNK=2` followed by
/// the shortlist in descending frequency order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Keeps the `shortlist_size` most frequent tokens; frequency ties are
/// broken lexicographically.
pub fn build_vocab<S: AsRef<[String]>>(sentences: &[S], shortlist_size: usize) -> Vocabulary {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for tok in s.as_ref() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().filter(|(t, _)| !is_reserved(t)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(shortlist_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
}

fn is_reserved(token: &str) -> bool {
    matches!(token, PAD_TOKEN | EOS_TOKEN | UNK_TOKEN)
}

impl Vocabulary {
    /// Builds from shortlist tokens in rank order. Duplicates and reserved
    /// strings are skipped.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut vocab = Vocabulary {
            tokens: vec![PAD_TOKEN.to_string(), EOS_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for (i, t) in vocab.tokens.iter().enumerate() {
            vocab.index.insert(t.clone(), i);
        }
        for t in tokens {
            if is_reserved(&t) || vocab.index.contains_key(&t) {
                continue;
            }
            vocab.index.insert(t.clone(), vocab.tokens.len());
            vocab.tokens.push(t);
        }
        vocab
    }

    /// Size including the reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED
    }

    /// Non-reserved tokens in id order.
    pub fn shortlist(&self) -> &[String] {
        &self.tokens[RESERVED..]
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.get(token).is_some_and(|&i| i >= RESERVED)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| invalid(format!("token id {id} out of range for vocabulary of {}", self.len())))
    }

    /// Ids for `tokens` followed by EOS; OOV tokens become UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.id(t.as_ref())).collect();
        ids.push(EOS);
        ids
    }

    /// Tokens up to the first EOS; padding is skipped and UNK renders as
    /// the literal `UNK`.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                EOS => break,
                PAD => continue,
                _ => out.push(self.token(id)?.to_string()),
            }
        }
        Ok(out)
    }

    /// Fraction of tokens that would encode to UNK.
    pub fn oov_rate<S: AsRef<[String]>>(&self, sentences: &[S]) -> f64 {
        let (mut total, mut oov) = (0usize, 0usize);
        for s in sentences {
            for t in s.as_ref() {
                total += 1;
                if !self.contains(t) {
                    oov += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            oov as f64 / total as f64
        }
    }

    /// One shortlist token per line, in id order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for t in self.shortlist() {
            text.push_str(t);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| file_error(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        Ok(Vocabulary::from_tokens(
            text.lines().filter(|l| !l.is_empty()).map(str::to_string),
        ))
    }
}
