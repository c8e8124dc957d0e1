use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{file_error, Error, Result};
use crate::tensor::argmax;
use crate::text::UNK_TOKEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Model,
    UnkReplacedDict,
    UnkReplacedCopy,
}

/// Decoder output rendered as strings, before any detokenization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationResult {
    /// Words, BPE pieces or lemmas, depending on the model.
    pub tokens: Vec<String>,
    /// Factor strings, one per token (factored models).
    pub factors: Option<Vec<String>>,
    /// One row per token over the source positions (source EOS included).
    pub attention: Vec<Vec<f64>>,
    pub origins: Vec<Origin>,
    pub log_prob: f64,
    pub score: f64,
}

/// Source word → target word table for UNK replacement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnigramDictionary {
    map: HashMap<String, String>,
}

impl UnigramDictionary {
    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        let mut map = HashMap::new();
        for (s, t) in pairs {
            map.entry(s).or_insert(t);
        }
        UnigramDictionary { map }
    }

    /// `source<TAB>target` lines; `# ` starts a comment. The first entry
    /// for a source word wins.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with("# ") {
                continue;
            }
            match line.split_once('\t') {
                Some((s, t)) if !s.is_empty() && !t.is_empty() && !t.contains('\t') => {
                    pairs.push((s.to_string(), t.to_string()))
                }
                _ => {
                    return Err(Error::Parse {
                        slot: format!("dictionary line {}", n + 1),
                        message: format!("expected source<TAB>target, found {line:?}"),
                    })
                }
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, source: &str) -> Option<&str> {
        self.map.get(source).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Argmax source position per attention row; ties go to the lowest index.
pub fn extract_alignment(result: &TranslationResult) -> Vec<usize> {
    result.attention.iter().map(|row| argmax(row)).collect()
}

/// Replaces every `UNK` token by the dictionary translation of its most
/// attended source word, or by that word itself when the dictionary has
/// no entry. Only real source words are candidates: the argmax skips the
/// source EOS column. With an empty source the replacement is empty.
pub fn unk_replace(
    result: &TranslationResult,
    source_tokens: &[String],
    dictionary: Option<&UnigramDictionary>,
) -> TranslationResult {
    let mut out = result.clone();
    for (i, tok) in out.tokens.iter_mut().enumerate() {
        if tok != UNK_TOKEN {
            continue;
        }
        let row = result.attention.get(i).map(Vec::as_slice).unwrap_or(&[]);
        let n = source_tokens.len().min(row.len());
        let (replacement, origin) = if n == 0 {
            (String::new(), Origin::UnkReplacedCopy)
        } else {
            let src = &source_tokens[argmax(&row[..n])];
            match dictionary.and_then(|d| d.get(src)) {
                Some(t) => (t.to_string(), Origin::UnkReplacedDict),
                None => (src.clone(), Origin::UnkReplacedCopy),
            }
        };
        *tok = replacement;
        out.origins[i] = origin;
    }
    out
}
