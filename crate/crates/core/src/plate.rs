//! New Jersey style license plates: one letter, two digits, three letters.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of distinct plates in the `L DD LLL` format: 26 * 10^2 * 26^3.
pub const PLATE_SPACE_SIZE: u64 = 26 * 100 * 26 * 26 * 26;

pub const PLATE_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlateError {
    #[error("plate must be {PLATE_LEN} characters, got {0}")]
    Length(usize),
    #[error("character {ch:?} at position {pos} is not a valid {expected}")]
    Character {
        pos: usize,
        ch: char,
        expected: &'static str,
    },
    #[error("plate index {0} is outside the plate space")]
    IndexOutOfRange(u64),
}

/// Which symbol class a plate slot accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotClass {
    Letter,
    Digit,
}

impl SlotClass {
    pub fn size(self) -> u64 {
        match self {
            SlotClass::Letter => 26,
            SlotClass::Digit => 10,
        }
    }

    pub fn accepts(self, ch: char) -> bool {
        match self {
            SlotClass::Letter => ch.is_ascii_uppercase(),
            SlotClass::Digit => ch.is_ascii_digit(),
        }
    }

    fn symbol(self, offset: u64) -> char {
        let base = match self {
            SlotClass::Letter => b'A',
            SlotClass::Digit => b'0',
        };
        char::from(base + offset as u8)
    }

    fn offset(self, ch: char) -> u64 {
        let base = match self {
            SlotClass::Letter => b'A',
            SlotClass::Digit => b'0',
        };
        u64::from(ch as u8 - base)
    }

    fn describe(self) -> &'static str {
        match self {
            SlotClass::Letter => "letter",
            SlotClass::Digit => "digit",
        }
    }
}

pub const PLATE_FORMAT: [SlotClass; PLATE_LEN] = [
    SlotClass::Letter,
    SlotClass::Digit,
    SlotClass::Digit,
    SlotClass::Letter,
    SlotClass::Letter,
    SlotClass::Letter,
];

/// A validated plate in canonical form (uppercase, no separators).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LicensePlate(String);

impl LicensePlate {
    /// Parses a plate, accepting lowercase input and ignoring spaces and hyphens.
    pub fn parse(input: &str) -> Result<Self, PlateError> {
        let canonical: String = input
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '-')
            .flat_map(char::to_uppercase)
            .collect();
        Self::from_canonical(canonical)
    }

    fn from_canonical(text: String) -> Result<Self, PlateError> {
        let count = text.chars().count();
        if count != PLATE_LEN {
            return Err(PlateError::Length(count));
        }
        for (pos, (ch, class)) in text.chars().zip(PLATE_FORMAT).enumerate() {
            if !class.accepts(ch) {
                return Err(PlateError::Character {
                    pos,
                    ch,
                    expected: class.describe(),
                });
            }
        }
        Ok(LicensePlate(text))
    }

    /// Maps an index in `0..PLATE_SPACE_SIZE` to a plate (mixed-radix decoding,
    /// last slot varies fastest).
    pub fn from_index(index: u64) -> Result<Self, PlateError> {
        if index >= PLATE_SPACE_SIZE {
            return Err(PlateError::IndexOutOfRange(index));
        }
        let mut rest = index;
        let mut chars = [' '; PLATE_LEN];
        for (slot, class) in PLATE_FORMAT.iter().enumerate().rev() {
            chars[slot] = class.symbol(rest % class.size());
            rest /= class.size();
        }
        Ok(LicensePlate(chars.iter().collect()))
    }

    /// Inverse of [`LicensePlate::from_index`].
    pub fn index(&self) -> u64 {
        self.0
            .chars()
            .zip(PLATE_FORMAT)
            .fold(0, |acc, (ch, class)| acc * class.size() + class.offset(ch))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LicensePlate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LicensePlate {
    type Err = PlateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for LicensePlate {
    type Error = PlateError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::from_canonical(value)
    }
}

impl From<LicensePlate> for String {
    fn from(plate: LicensePlate) -> Self {
        plate.0
    }
}

/// Draws a plate uniformly from the whole format space.
pub fn generate_plate(seed: u64) -> LicensePlate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_plate(&mut rng)
}

pub fn random_plate<R: Rng + ?Sized>(rng: &mut R) -> LicensePlate {
    let index = rng.gen_range(0..PLATE_SPACE_SIZE);
    LicensePlate::from_index(index).expect("index drawn inside the plate space")
}
