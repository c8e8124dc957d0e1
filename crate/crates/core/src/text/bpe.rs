//! Byte pair encoding over characters, learned jointly on source and target
//! words.
//!
//! A word starts as its characters with [`END_OF_WORD`] glued to the last
//! one, so merges never cross word boundaries and word-final units stay
//! distinct from word-internal ones. Rendered pieces drop the end marker
//! and mark every non-final piece with [`CONTINUATION`], e.g.
//! `b@@ af@@ és`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{file_error, invalid, Result};

pub const CONTINUATION: &str = "@@";
pub const END_OF_WORD: &str = "</w>";
const HEADER: &str = "#fnmt-bpe-merges v1";

type Pair = (String, String);

/// Ordered merge rules; rule `i` has priority over rule `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<Pair>,
    ranks: HashMap<Pair, usize>,
}

/// Word counts over any number of token streams.
pub fn word_frequencies<S: AsRef<[String]>>(streams: &[S]) -> BTreeMap<String, u64> {
    let mut freqs = BTreeMap::new();
    for s in streams {
        for w in s.as_ref() {
            *freqs.entry(w.clone()).or_default() += 1;
        }
    }
    freqs
}

fn initial_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

fn merge_symbols(symbols: &[String], pair: &Pair) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Learns up to `num_merges` rules by repeatedly merging the most frequent
/// adjacent pair. Stops early once no pair occurs at least twice. Count
/// ties go to the lexicographically smallest pair.
pub fn bpe_learn(word_freqs: &BTreeMap<String, u64>, num_merges: usize) -> MergeTable {
    let mut words: Vec<(Vec<String>, i64)> = word_freqs
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, &f)| (initial_symbols(w), f as i64))
        .collect();

    let mut counts: HashMap<Pair, i64> = HashMap::new();
    let mut occurs: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    for (idx, (symbols, freq)) in words.iter().enumerate() {
        for w in symbols.windows(2) {
            let pair = (w[0].clone(), w[1].clone());
            *counts.entry(pair.clone()).or_default() += freq;
            occurs.entry(pair).or_default().insert(idx);
        }
    }
    let mut heap: BinaryHeap<(i64, Reverse<Pair>)> = counts.iter().map(|(p, &c)| (c, Reverse(p.clone()))).collect();

    let mut table = MergeTable::default();
    while table.merges.len() < num_merges {
        let Some((count, Reverse(best))) = heap.pop() else {
            break;
        };
        if counts.get(&best).copied().unwrap_or(0) != count {
            continue; // stale entry
        }
        if count < 2 {
            break;
        }
        let affected: Vec<usize> = occurs.remove(&best).unwrap_or_default().into_iter().collect();
        let mut touched: BTreeSet<Pair> = BTreeSet::new();
        for idx in affected {
            let (symbols, freq) = &words[idx];
            let freq = *freq;
            for w in symbols.windows(2) {
                let pair = (w[0].clone(), w[1].clone());
                *counts.get_mut(&pair).expect("counted pair") -= freq;
                touched.insert(pair);
            }
            let merged = merge_symbols(symbols, &best);
            for w in merged.windows(2) {
                let pair = (w[0].clone(), w[1].clone());
                *counts.entry(pair.clone()).or_default() += freq;
                occurs.entry(pair.clone()).or_default().insert(idx);
                touched.insert(pair);
            }
            words[idx].0 = merged;
        }
        for pair in touched {
            let c = counts[&pair];
            if c > 0 {
                heap.push((c, Reverse(pair)));
            } else {
                counts.remove(&pair);
                occurs.remove(&pair);
            }
        }
        table.push(best);
    }
    table
}

impl MergeTable {
    pub fn from_rules(rules: Vec<(String, String)>) -> Result<Self> {
        let mut table = MergeTable::default();
        for rule in rules {
            if table.ranks.contains_key(&rule) {
                return Err(invalid(format!("duplicate merge rule {} {}", rule.0, rule.1)));
            }
            table.push(rule);
        }
        Ok(table)
    }

    fn push(&mut self, rule: Pair) {
        self.ranks.insert(rule.clone(), self.merges.len());
        self.merges.push(rule);
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Segments one word, applying merges in learned order. The returned
    /// pieces carry no markers.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&r| (r, (w[0].clone(), w[1].clone())))
                })
                .min_by_key(|(r, _)| *r);
            match best {
                Some((_, pair)) => symbols = merge_symbols(&symbols, &pair),
                None => break,
            }
        }
        if let Some(last) = symbols.last_mut() {
            let trimmed = last.len() - END_OF_WORD.len();
            last.truncate(trimmed);
        }
        symbols
    }

    /// Segments every token, suffixing non-final pieces with `@@`.
    pub fn apply<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        for tok in tokens {
            let pieces = self.segment(tok.as_ref());
            let n = pieces.len();
            for (i, p) in pieces.into_iter().enumerate() {
                if i + 1 < n {
                    out.push(format!("{p}{CONTINUATION}"));
                } else {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::from(HEADER);
        text.push('\n');
        for (l, r) in &self.merges {
            text.push_str(l);
            text.push(' ');
            text.push_str(r);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| file_error(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(HEADER) => {}
            other => {
                return Err(invalid(format!(
                    "merge file header: expected {HEADER:?}, found {other:?}"
                )));
            }
        }
        let mut rules = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    rules.push((l.to_string(), r.to_string()))
                }
                _ => return Err(invalid(format!("merge file line {}: malformed rule {line:?}", n + 2))),
            }
        }
        MergeTable::from_rules(rules)
    }
}

/// Joins pieces at `@@` boundaries back into words.
pub fn bpe_undo<S: AsRef<str>>(subwords: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    let mut pending = String::new();
    for piece in subwords {
        let piece = piece.as_ref();
        match piece.strip_suffix(CONTINUATION) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(piece);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() {
        out.push(pending);
    }
    out
}
