//! Keyword parsing of pick-and-place commands.
//!
//! The vocabulary file is plain `key = value` text, one entry per line:
//!
//! ```text
//! # comments start with '#'
//! object.pepper = pepper, red pepper
//! plate.yellow  = yellow
//! ```
//!
//! Matching is case-insensitive on whole words; a synonym may span several
//! words.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{ObjectKind, PlateColor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub raw_text: String,
    pub object: ObjectKind,
    pub plate: PlateColor,
}

impl Instruction {
    /// Canonical rendering, accepted back by [`parse_instruction`] with the
    /// default vocabulary.
    pub fn canonical(object: ObjectKind, plate: PlateColor) -> Self {
        Self {
            raw_text: format!("pick the {object} and place on the {plate} plate"),
            object,
            plate,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw_text)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InstructionError {
    #[error("no known object in `{0}`")]
    NoObject(String),
    #[error("no known plate in `{0}`")]
    NoPlate(String),
    #[error("ambiguous command `{text}`: mentions {first} and {second}")]
    Ambiguous { text: String, first: String, second: String },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: empty synonym list")]
    Empty { line: usize },
}

/// Synonym phrases (already tokenized) for each object kind and plate color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    objects: BTreeMap<ObjectKind, Vec<Vec<String>>>,
    plates: BTreeMap<PlateColor, Vec<Vec<String>>>,
}

pub const DEFAULT_VOCABULARY: &str = "\
# object nouns
object.pepper = pepper, red pepper
object.tape = tape
object.paper = paper, blue paper
object.block = block, cuboid
# plate colors
plate.yellow = yellow
plate.purple = purple
";

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

impl Vocabulary {
    pub fn parse(text: &str) -> Result<Self, VocabularyError> {
        let mut objects = BTreeMap::new();
        let mut plates = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(VocabularyError::Syntax { line: line_no })?;
            let key = key.trim();
            let phrases: Vec<Vec<String>> =
                value.split(',').map(tokenize).filter(|p| !p.is_empty()).collect();
            if phrases.is_empty() {
                return Err(VocabularyError::Empty { line: line_no });
            }
            let unknown = || VocabularyError::UnknownKey { line: line_no, key: key.to_string() };
            if let Some(name) = key.strip_prefix("object.") {
                let kind: ObjectKind = name.parse().map_err(|_| unknown())?;
                objects.entry(kind).or_insert_with(Vec::new).extend(phrases);
            } else if let Some(name) = key.strip_prefix("plate.") {
                let color: PlateColor = name.parse().map_err(|_| unknown())?;
                plates.entry(color).or_insert_with(Vec::new).extend(phrases);
            } else {
                return Err(unknown());
            }
        }
        Ok(Self { objects, plates })
    }

    pub fn objects(&self) -> impl Iterator<Item = ObjectKind> + '_ {
        self.objects.keys().copied()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::parse(DEFAULT_VOCABULARY).expect("built-in vocabulary parses")
    }
}

fn single_match<K: Copy + fmt::Display>(
    tokens: &[String],
    table: &BTreeMap<K, Vec<Vec<String>>>,
    text: &str,
) -> Result<Option<K>, InstructionError> {
    let mut found: Option<K> = None;
    for (kind, phrases) in table {
        if phrases.iter().any(|p| contains_phrase(tokens, p)) {
            if let Some(first) = found {
                return Err(InstructionError::Ambiguous {
                    text: text.to_string(),
                    first: first.to_string(),
                    second: kind.to_string(),
                });
            }
            found = Some(*kind);
        }
    }
    Ok(found)
}

pub fn parse_instruction(text: &str, vocabulary: &Vocabulary) -> Result<Instruction, InstructionError> {
    let tokens = tokenize(text);
    let object = single_match(&tokens, &vocabulary.objects, text)?
        .ok_or_else(|| InstructionError::NoObject(text.to_string()))?;
    let plate = single_match(&tokens, &vocabulary.plates, text)?
        .ok_or_else(|| InstructionError::NoPlate(text.to_string()))?;
    Ok(Instruction { raw_text: text.to_string(), object, plate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_commands() {
        let v = Vocabulary::default();
        let i = parse_instruction("pick the pepper and place on the yellow plate", &v).unwrap();
        assert_eq!((i.object, i.plate), (ObjectKind::Pepper, PlateColor::Yellow));
        let i = parse_instruction("put the tape on the purple plate", &v).unwrap();
        assert_eq!((i.object, i.plate), (ObjectKind::Tape, PlateColor::Purple));
        let i = parse_instruction("Put the BLUE PAPER on the Purple plate!", &v).unwrap();
        assert_eq!((i.object, i.plate), (ObjectKind::Paper, PlateColor::Purple));
    }

    #[test]
    fn distinct_errors() {
        let v = Vocabulary::default();
        assert!(matches!(parse_instruction("move it to the plate", &v), Err(InstructionError::NoObject(_))));
        assert!(matches!(parse_instruction("grab the tape", &v), Err(InstructionError::NoPlate(_))));
        assert!(matches!(
            parse_instruction("put the tape and the pepper on the yellow plate", &v),
            Err(InstructionError::Ambiguous { .. })
        ));
    }

    #[test]
    fn whole_words_only() {
        let v = Vocabulary::default();
        assert!(matches!(parse_instruction("put the tapestry on the yellow plate", &v), Err(InstructionError::NoObject(_))));
    }

    #[test]
    fn canonical_round_trip() {
        let v = Vocabulary::default();
        for object in ObjectKind::ALL {
            for plate in PlateColor::ALL {
                let i = Instruction::canonical(object, plate);
                assert_eq!(parse_instruction(&i.raw_text, &v).unwrap(), i);
            }
        }
    }

    #[test]
    fn vocabulary_errors() {
        assert_eq!(Vocabulary::parse("object.pepper pepper"), Err(VocabularyError::Syntax { line: 1 }));
        assert!(matches!(Vocabulary::parse("\nobject.banana = banana"), Err(VocabularyError::UnknownKey { line: 2, .. })));
        assert_eq!(Vocabulary::parse("plate.yellow = , "), Err(VocabularyError::Empty { line: 1 }));
    }
}
