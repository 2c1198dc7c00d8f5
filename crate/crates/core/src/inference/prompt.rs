use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{LabelSpace, MAX_CLASSES};
use crate::volume::{Coord, Dims};

/// Class-index prompt for the automatic branch. Index 0 is reserved for background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassPrompt(u32);

impl ClassPrompt {
    pub const BACKGROUND: ClassPrompt = ClassPrompt(0);

    pub fn new(index: u32) -> Result<Self> {
        if index > MAX_CLASSES {
            return Err(Error::arg(format!(
                "class index {index} outside 0..={MAX_CLASSES}"
            )));
        }
        Ok(ClassPrompt(index))
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn is_background(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" | "positive" | "+" => Ok(Polarity::Positive),
            "neg" | "negative" | "-" => Ok(Polarity::Negative),
            _ => Err(Error::arg(format!("polarity must be pos or neg, got {s:?}"))),
        }
    }
}

/// What the click is about: a supported class, a supported class that
/// overlaps another one, or a structure outside the class table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointContext {
    Supported(u32),
    Ambiguous(u32),
    ZeroShot,
}

impl PointContext {
    /// Context for clicks on `class`; `None` means zero-shot.
    pub fn for_class(class: Option<u32>, space: &LabelSpace) -> Self {
        match class {
            None => PointContext::ZeroShot,
            Some(c) if space.is_ambiguous(c) => PointContext::Ambiguous(c),
            Some(c) => PointContext::Supported(c),
        }
    }

    pub fn class(self) -> Option<u32> {
        match self {
            PointContext::Supported(c) | PointContext::Ambiguous(c) => Some(c),
            PointContext::ZeroShot => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointPrompt {
    pub position: Coord,
    pub polarity: Polarity,
    pub context: PointContext,
}

impl PointPrompt {
    pub fn new(position: Coord, polarity: Polarity, context: PointContext) -> Self {
        PointPrompt {
            position,
            polarity,
            context,
        }
    }

    pub fn positive(position: Coord) -> Self {
        Self::new(position, Polarity::Positive, PointContext::ZeroShot)
    }

    pub fn negative(position: Coord) -> Self {
        Self::new(position, Polarity::Negative, PointContext::ZeroShot)
    }

    pub fn is_positive(&self) -> bool {
        self.polarity.is_positive()
    }

    pub fn validate(&self, dims: Dims, ambiguous: Option<&[u32]>) -> Result<()> {
        dims.check_coord(self.position)?;
        if let (PointContext::Ambiguous(c), Some(list)) = (self.context, ambiguous) {
            if !list.contains(&c) {
                return Err(Error::arg(format!(
                    "class {c} is not configured as ambiguous"
                )));
            }
        }
        Ok(())
    }
}

/// Either prompt kind, as accepted by sliding-window inference.
#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Class(ClassPrompt),
    Points(Vec<PointPrompt>),
}
