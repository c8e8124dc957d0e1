use std::fmt;

use crate::error::{Error, Result};

/// Letter case of a surface form, stored as the last factor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    /// `l`: all lowercase (or no letters at all).
    Lower,
    /// `u`: first letter capitalized, the rest not all capitals.
    Capitalized,
    /// `c`: every letter a capital, at least two letters.
    Upper,
}

impl Case {
    pub fn code(self) -> char {
        match self {
            Case::Lower => 'l',
            Case::Capitalized => 'u',
            Case::Upper => 'c',
        }
    }

    pub fn from_code(c: char) -> Option<Case> {
        match c {
            'l' => Some(Case::Lower),
            'u' => Some(Case::Capitalized),
            'c' => Some(Case::Upper),
            _ => None,
        }
    }

    /// Observed casing of `word`.
    pub fn of(word: &str) -> Case {
        let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
        let upper = letters.iter().filter(|c| c.is_uppercase()).count();
        let first_upper = word.chars().next().is_some_and(char::is_uppercase);
        if letters.len() >= 2 && upper == letters.len() {
            Case::Upper
        } else if first_upper {
            Case::Capitalized
        } else {
            Case::Lower
        }
    }

    /// Rewrites a lowercase form into this casing.
    pub fn apply(self, word: &str) -> String {
        match self {
            Case::Lower => word.to_string(),
            Case::Upper => word.to_uppercase(),
            Case::Capitalized => {
                let mut chars = word.chars();
                match chars.next() {
                    Some(first) => first.to_uppercase().chain(chars).collect(),
                    None => String::new(),
                }
            }
        }
    }
}

/// Six-slot morphological tag `pos-tense-person-gender-number-case`.
/// Slots that do not apply hold `#`; the case slot always applies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorTag {
    pub pos: String,
    pub tense: String,
    pub person: char,
    pub gender: char,
    pub number: char,
    pub case: Case,
}

pub const NONE_MARK: char = '#';

fn slot_error(slot: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        slot: slot.to_string(),
        message: message.into(),
    }
}

fn single_char(slot: &str, value: &str, allowed: &[char]) -> Result<char> {
    let mut chars = value.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if allowed.contains(&c) => Ok(c),
        _ => Err(slot_error(
            slot,
            format!("illegal value {value:?}, expected one of {allowed:?}"),
        )),
    }
}

const PERSONS: [char; 4] = ['1', '2', '3', NONE_MARK];
const GENDERS: [char; 3] = ['m', 'f', NONE_MARK];
const NUMBERS: [char; 3] = ['s', 'p', NONE_MARK];

impl FactorTag {
    /// Fallback tag for words missing from the lexicon.
    pub fn unknown(case: Case) -> FactorTag {
        FactorTag {
            pos: "unk".to_string(),
            tense: NONE_MARK.to_string(),
            person: NONE_MARK,
            gender: NONE_MARK,
            number: NONE_MARK,
            case,
        }
    }

    pub fn with_case(&self, case: Case) -> FactorTag {
        FactorTag { case, ..self.clone() }
    }

    /// Parses the canonical hyphen-joined six-slot form.
    pub fn parse(s: &str) -> Result<FactorTag> {
        let slots: Vec<&str> = s.split('-').collect();
        if slots.len() != 6 {
            return Err(slot_error(
                "tag",
                format!("expected 6 slots in {s:?}, found {}", slots.len()),
            ));
        }
        let pos = slots[0];
        if pos.is_empty() || pos.contains(char::is_whitespace) {
            return Err(slot_error("pos", format!("illegal value {pos:?}")));
        }
        let tense = slots[1];
        if tense.is_empty() || tense.contains(char::is_whitespace) {
            return Err(slot_error("tense", format!("illegal value {tense:?}")));
        }
        let case_char = single_char("case", slots[5], &['l', 'u', 'c'])?;
        Ok(FactorTag {
            pos: pos.to_string(),
            tense: tense.to_string(),
            person: single_char("person", slots[2], &PERSONS)?,
            gender: single_char("gender", slots[3], &GENDERS)?,
            number: single_char("number", slots[4], &NUMBERS)?,
            case: Case::from_code(case_char).expect("validated"),
        })
    }

    /// Accepts the canonical form plus the two shorthand notations and
    /// returns the canonical tag:
    ///
    /// - hyphenated with inapplicable slots omitted, e.g. `v-P-1-s-l` or
    ///   `vppart-K-m-p-l`; the middle values are assigned to slots by their
    ///   value class (person digit, gender `m`/`f`, number `s`/`p`, anything
    ///   else is a tense code);
    /// - compact, e.g. `VP3#SL` or `Adj##MSL`: a part of speech followed by
    ///   exactly five one-character slots.
    pub fn normalize(s: &str) -> Result<FactorTag> {
        if let Ok(tag) = FactorTag::parse(s) {
            return Ok(tag);
        }
        if s.contains('-') {
            Self::from_short(s)
        } else {
            Self::from_compact(s)
        }
    }

    fn from_short(s: &str) -> Result<FactorTag> {
        let slots: Vec<&str> = s.split('-').collect();
        if slots.len() < 2 || slots.len() > 6 {
            return Err(slot_error(
                "tag",
                format!("cannot normalize {s:?}: {} slots", slots.len()),
            ));
        }
        let mut tag = FactorTag::unknown(Case::Lower);
        tag.pos = slots[0].to_string();
        let case_char = single_char("case", slots[slots.len() - 1], &['l', 'u', 'c'])?;
        tag.case = Case::from_code(case_char).expect("validated");
        // Slots must appear in canonical order: tense, person, gender, number.
        let mut next_slot = 0;
        for value in &slots[1..slots.len() - 1] {
            let class = match *value {
                "1" | "2" | "3" => 1,
                "m" | "f" => 2,
                "s" | "p" => 3,
                "#" => next_slot,
                _ => 0,
            };
            if class < next_slot || class > 3 {
                return Err(slot_error("tag", format!("slot {value:?} out of order in {s:?}")));
            }
            let c = value.chars().next().unwrap_or(NONE_MARK);
            match class {
                0 => tag.tense = value.to_string(),
                1 => tag.person = c,
                2 => tag.gender = c,
                _ => tag.number = c,
            }
            next_slot = class + 1;
        }
        if tag.pos.is_empty() || tag.tense.is_empty() {
            return Err(slot_error("tag", format!("cannot normalize {s:?}")));
        }
        Ok(tag)
    }

    fn from_compact(s: &str) -> Result<FactorTag> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() < 6 {
            return Err(slot_error("tag", format!("compact tag {s:?} too short")));
        }
        let split = chars.len() - 5;
        let pos: String = chars[..split].iter().collect();
        let pos = match pos.as_str() {
            "V" => "v".to_string(),
            "N" => "nc".to_string(),
            other => other.to_lowercase(),
        };
        let lower = |c: char| c.to_lowercase().next().unwrap_or(c);
        let tense = chars[split].to_string();
        let person = single_char("person", &chars[split + 1].to_string(), &PERSONS)?;
        let gender = single_char("gender", &lower(chars[split + 2]).to_string(), &GENDERS)?;
        let number = single_char("number", &lower(chars[split + 3]).to_string(), &NUMBERS)?;
        let case = Case::from_code(lower(chars[split + 4]))
            .ok_or_else(|| slot_error("case", format!("illegal value {:?}", chars[split + 4])))?;
        Ok(FactorTag {
            pos,
            tense,
            person,
            gender,
            number,
            case,
        })
    }
}

impl fmt::Display for FactorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-{}-{}-{}",
            self.pos,
            self.tense,
            self.person,
            self.gender,
            self.number,
            self.case.code()
        )
    }
}

impl std::str::FromStr for FactorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FactorTag::parse(s)
    }
}
