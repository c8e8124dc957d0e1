use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::tag::{Case, FactorTag};
use crate::error::{file_error, invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub surface: String,
    pub lemma: String,
    pub tag: FactorTag,
}

/// Result of analysing one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub lemma: String,
    pub tag: FactorTag,
    /// False when the word was missing and the fallback analysis was used.
    pub known: bool,
}

/// Surface ↔ (lemma, tag) table. Surfaces are stored lowercase with the
/// case slot set to `l`; casing is applied on the way out.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    analyses: HashMap<String, Vec<(String, FactorTag)>>,
    generation: HashMap<(String, FactorTag), String>,
    entries: usize,
    conflicts: usize,
}

impl Lexicon {
    pub fn from_entries<I: IntoIterator<Item = LexiconEntry>>(entries: I) -> Result<Self> {
        let mut lex = Lexicon::default();
        for e in entries {
            lex.add(e)?;
        }
        if lex.conflicts > 0 {
            log::warn!(
                "lexicon: {} generation conflicts resolved by first entry",
                lex.conflicts
            );
        }
        Ok(lex)
    }

    fn add(&mut self, entry: LexiconEntry) -> Result<()> {
        let observed = Case::of(&entry.surface);
        if observed != entry.tag.case {
            return Err(invalid(format!(
                "lexicon entry {:?}: case slot {:?} but surface is {:?}",
                entry.surface, entry.tag.case, observed
            )));
        }
        let surface = entry.surface.to_lowercase();
        let tag = entry.tag.with_case(Case::Lower);
        let readings = self.analyses.entry(surface.clone()).or_default();
        if !readings.contains(&(entry.lemma.clone(), tag.clone())) {
            readings.push((entry.lemma.clone(), tag.clone()));
        }
        match self.generation.get(&(entry.lemma.clone(), tag.clone())) {
            Some(existing) if *existing != surface => self.conflicts += 1,
            Some(_) => {}
            None => {
                self.generation.insert((entry.lemma, tag), surface);
            }
        }
        self.entries += 1;
        Ok(())
    }

    /// Parses the TSV format: `surface<TAB>lemma<TAB>factors`, with `# `
    /// comment lines. Factor strings may use any notation accepted by
    /// [`FactorTag::normalize`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with("# ") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let at = |message: String| Error::Parse {
                slot: format!("lexicon line {}", n + 1),
                message,
            };
            if cols.len() != 3 {
                return Err(at(format!("expected 3 columns, found {}", cols.len())));
            }
            let tag = FactorTag::normalize(cols[2]).map_err(|e| at(e.to_string()))?;
            entries.push(LexiconEntry {
                surface: cols[0].to_string(),
                lemma: cols[1].to_string(),
                tag,
            });
        }
        Lexicon::from_entries(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        Self::parse(&text)
    }

    /// Number of entries loaded, duplicates included.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    /// (lemma, tag) keys that mapped to a second, different surface.
    pub fn generation_conflicts(&self) -> usize {
        self.conflicts
    }

    /// Distinct lowercase surfaces, sorted.
    pub fn surfaces(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.analyses.keys().map(String::as_str).collect();
        out.sort_unstable();
        out
    }

    /// Every (lemma, tag) → surface pair of the generation index, sorted.
    pub fn generation_entries(&self) -> Vec<(&str, &FactorTag, &str)> {
        let mut out: Vec<_> = self
            .generation
            .iter()
            .map(|((l, t), s)| (l.as_str(), t, s.as_str()))
            .collect();
        out.sort();
        out
    }

    /// Distinct tags appearing in the lexicon (lowercase case slot), sorted.
    pub fn tags(&self) -> Vec<FactorTag> {
        let set: BTreeSet<FactorTag> = self.generation.keys().map(|(_, t)| t.clone()).collect();
        set.into_iter().collect()
    }

    /// First lexicon reading with the word's observed casing, or the
    /// fallback `(lowercased word, unk-#-#-#-#-<case>)`.
    pub fn analyze(&self, word: &str) -> Analysis {
        let case = Case::of(word);
        let lower = word.to_lowercase();
        match self.analyses.get(&lower).and_then(|r| r.first()) {
            Some((lemma, tag)) => Analysis {
                lemma: lemma.clone(),
                tag: tag.with_case(case),
                known: true,
            },
            None => Analysis {
                lemma: lower,
                tag: FactorTag::unknown(case),
                known: false,
            },
        }
    }

    /// Surface for (lemma, tag) with the tag's case applied; the lemma
    /// itself (cased) when the lexicon has no such form.
    pub fn generate(&self, lemma: &str, tag: &FactorTag) -> String {
        self.lookup_form(lemma, tag)
            .map(|s| tag.case.apply(s))
            .unwrap_or_else(|| tag.case.apply(lemma))
    }

    /// Generation-index hit only, without casing or fallback.
    pub fn lookup_form(&self, lemma: &str, tag: &FactorTag) -> Option<&str> {
        self.generation
            .get(&(lemma.to_string(), tag.with_case(Case::Lower)))
            .map(String::as_str)
    }
}

/// Per-sentence lemma and tag streams of equal length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FactoredSentence {
    pub lemmas: Vec<String>,
    pub tags: Vec<FactorTag>,
}

impl FactoredSentence {
    pub fn factor_strings(&self) -> Vec<String> {
        self.tags.iter().map(FactorTag::to_string).collect()
    }
}

pub fn factorize_sentence<S: AsRef<str>>(words: &[S], lexicon: &Lexicon) -> FactoredSentence {
    let mut out = FactoredSentence::default();
    for w in words {
        let a = lexicon.analyze(w.as_ref());
        out.lemmas.push(a.lemma);
        out.tags.push(a.tag);
    }
    out
}

pub fn factorize_corpus<S: AsRef<[String]>>(sentences: &[S], lexicon: &Lexicon) -> Vec<FactoredSentence> {
    sentences
        .iter()
        .map(|s| factorize_sentence(s.as_ref(), lexicon))
        .collect()
}

/// Elementwise [`Lexicon::generate`] over two equal-length streams.
pub fn recombine<S: AsRef<str>>(lemmas: &[S], tags: &[FactorTag], lexicon: &Lexicon) -> Result<Vec<String>> {
    if lemmas.len() != tags.len() {
        return Err(invalid(format!(
            "recombine: {} lemmas but {} factor tags",
            lemmas.len(),
            tags.len()
        )));
    }
    Ok(lemmas
        .iter()
        .zip(tags)
        .map(|(l, t)| lexicon.generate(l.as_ref(), t))
        .collect())
}

/// Distinct surfaces the generation index yields for lemmas in
/// `lemma_vocab`.
pub fn count_generable<S: AsRef<str>>(lemma_vocab: &[S], lexicon: &Lexicon) -> usize {
    let wanted: HashSet<&str> = lemma_vocab.iter().map(|s| s.as_ref()).collect();
    let surfaces: HashSet<&str> = lexicon
        .generation
        .iter()
        .filter(|((lemma, _), _)| wanted.contains(lemma.as_str()))
        .map(|(_, s)| s.as_str())
        .collect();
    surfaces.len()
}
