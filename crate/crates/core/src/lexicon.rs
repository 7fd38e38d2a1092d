//! The NATO spelling lexicon and plate-to-words encoding.

use std::collections::HashSet;

use crate::plate::LicensePlate;

const STANDARD_LEXICON: &str = include_str!("../data/nato_lexicon.txt");

pub const DEFAULT_LEAD_SENTENCE: &str = "reporting license plate";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("line {line}: expected `<word> <symbol>`")]
    Malformed { line: usize },
    #[error("line {line}: symbol {symbol:?} must be a single A-Z or 0-9 character")]
    BadSymbol { line: usize, symbol: String },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(char),
    #[error("lexicon needs 26 letter and 10 digit entries, got {letters} and {digits}")]
    Incomplete { letters: usize, digits: usize },
    #[error("no lexicon word for symbol {0:?}")]
    MissingSymbol(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub symbol: char,
}

/// Ordered word/symbol table: the letters A-Z first, then the digits 0-9.
/// Order matters because it breaks ties during approximate matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NatoLexicon {
    entries: Vec<LexiconEntry>,
}

impl NatoLexicon {
    pub fn standard() -> Self {
        Self::parse(STANDARD_LEXICON).expect("embedded lexicon is valid")
    }

    /// Parses `<word> <symbol>` lines; `#` starts a comment. Words are
    /// lowercased and stripped of hyphens.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let (Some(word), Some(symbol), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(LexiconError::Malformed { line });
            };
            let mut chars = symbol.chars();
            let symbol_char = match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_uppercase() || c.is_ascii_digit() => c,
                _ => {
                    return Err(LexiconError::BadSymbol {
                        line,
                        symbol: symbol.to_string(),
                    })
                }
            };
            entries.push(LexiconEntry {
                word: word.replace('-', "").to_lowercase(),
                symbol: symbol_char,
            });
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(mut entries: Vec<LexiconEntry>) -> Result<Self, LexiconError> {
        let mut words = HashSet::new();
        let mut symbols = HashSet::new();
        for entry in &entries {
            if !words.insert(entry.word.clone()) {
                return Err(LexiconError::DuplicateWord(entry.word.clone()));
            }
            if !symbols.insert(entry.symbol) {
                return Err(LexiconError::DuplicateSymbol(entry.symbol));
            }
        }
        let letters = entries.iter().filter(|e| e.symbol.is_ascii_uppercase()).count();
        let digits = entries.len() - letters;
        if letters != 26 || digits != 10 {
            return Err(LexiconError::Incomplete { letters, digits });
        }
        entries.sort_by_key(|e| (e.symbol.is_ascii_digit(), e.symbol));
        Ok(NatoLexicon { entries })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn word_for(&self, symbol: char) -> Option<&str> {
        let symbol = symbol.to_ascii_uppercase();
        self.entries
            .iter()
            .find(|e| e.symbol == symbol)
            .map(|e| e.word.as_str())
    }

    pub fn symbol_for(&self, word: &str) -> Option<char> {
        self.entries.iter().find(|e| e.word == word).map(|e| e.symbol)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.symbol_for(word).is_some()
    }
}

impl Default for NatoLexicon {
    fn default() -> Self {
        Self::standard()
    }
}

/// Spells a plate as `<lead> <word> <word> ...`, lowercase, single spaces.
pub fn plate_to_nato(
    plate: &LicensePlate,
    lexicon: &NatoLexicon,
    lead: &str,
) -> Result<String, LexiconError> {
    let mut words: Vec<String> = lead.split_whitespace().map(str::to_lowercase).collect();
    for ch in plate.as_str().chars() {
        let word = lexicon.word_for(ch).ok_or(LexiconError::MissingSymbol(ch))?;
        words.push(word.to_string());
    }
    Ok(words.join(" "))
}
