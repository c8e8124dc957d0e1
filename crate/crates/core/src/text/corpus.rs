use std::fs;
use std::path::Path;

use crate::error::{file_error, invalid, Result};

/// One aligned source/target sentence, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl SentencePair {
    pub fn new(source: &str, target: &str) -> Self {
        SentencePair {
            source: tokenize(source),
            target: tokenize(target),
        }
    }
}

/// Whitespace tokenization; punctuation is expected to be split already.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

const ENTITIES: [(&str, &str); 5] = [
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", "\""),
    ("&apos;", "'"),
    ("&amp;", "&"),
];

/// Replaces the five XML entities. Anything else is left untouched.
pub fn decode_entities(line: &str) -> String {
    if !line.contains('&') {
        return line.to_string();
    }
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    'outer: while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        for (entity, ch) in ENTITIES {
            if let Some(tail) = rest.strip_prefix(entity) {
                out.push_str(ch);
                rest = tail;
                continue 'outer;
            }
        }
        out.push('&');
        rest = &rest[1..];
    }
    out.push_str(rest);
    out
}

/// Keeps pairs whose sides are both non-empty and at most `max_len` tokens,
/// in their original order.
pub fn filter_corpus(pairs: Vec<SentencePair>, max_len: usize) -> Vec<SentencePair> {
    pairs
        .into_iter()
        .filter(|p| {
            !p.source.is_empty() && !p.target.is_empty() && p.source.len() <= max_len && p.target.len() <= max_len
        })
        .collect()
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Reads two line-aligned UTF-8 files, decoding entities on both sides.
pub fn read_parallel(source: &Path, target: &Path) -> Result<Vec<SentencePair>> {
    let src = read_lines(source)?;
    let tgt = read_lines(target)?;
    if src.len() != tgt.len() {
        return Err(invalid(format!(
            "{} has {} lines but {} has {}",
            source.display(),
            src.len(),
            target.display(),
            tgt.len()
        )));
    }
    Ok(src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| SentencePair::new(&decode_entities(s), &decode_entities(t)))
        .collect())
}
