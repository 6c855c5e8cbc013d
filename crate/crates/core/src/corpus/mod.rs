//! Dialogue data model, dataset loaders and the synthetic dialogue generator.
//!
//! Every loader normalizes into the same shape: a [`Corpus`] holding a fixed
//! [`LabelSet`] and a list of [`Dialogue`]s whose utterances are numbered
//! `1..=M` in chronological order.

mod loaders;
mod names;
mod stats;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loaders::{load_corpus, read_native, write_native, CorpusFormat, LoadOptions};
pub use names::{assign_iemocap_names, FEMALE_NAMES, MALE_NAMES};
pub use stats::{compute_stats, CorpusStats, SplitStats};
pub use synthetic::{generate_synthetic, LabelRule, SyntheticConfig};

/// Which partition of the data a dialogue belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "F", alias = "f", alias = "female")]
    Female,
    #[serde(rename = "M", alias = "m", alias = "male")]
    Male,
}

/// An interlocutor. `display_name` is what gets rendered in packed sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
}

impl Speaker {
    /// A speaker whose id and display name coincide.
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        Speaker {
            id: name.clone(),
            display_name: name,
            gender: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmotionLabel {
    pub class_index: usize,
    pub class_name: String,
}

/// The fixed, ordered class inventory of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub name: String,
    pub classes: Vec<String>,
}

const MELD_CLASSES: [&str; 7] = [
    "neutral", "joy", "surprise", "anger", "sadness", "disgust", "fear",
];

const IEMOCAP_CLASSES: [&str; 6] = [
    "neutral",
    "frustration",
    "sadness",
    "anger",
    "excited",
    "happiness",
];

// Short codes used by the original IEMOCAP annotation files.
const IEMOCAP_ABBREVIATIONS: [(&str, &str); 6] = [
    ("neu", "neutral"),
    ("fru", "frustration"),
    ("sad", "sadness"),
    ("ang", "anger"),
    ("exc", "excited"),
    ("hap", "happiness"),
];

impl LabelSet {
    pub fn meld() -> Self {
        LabelSet {
            name: "meld".into(),
            classes: MELD_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn iemocap() -> Self {
        LabelSet {
            name: "iemocap".into(),
            classes: IEMOCAP_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn custom(name: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidArgument("label set has no classes".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!("duplicate class {c:?}")));
            }
        }
        Ok(LabelSet {
            name: name.into(),
            classes,
        })
    }

    /// Resolve a label by name; `"meld"` or `"iemocap"` return the built-in sets.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "meld" => Some(Self::meld()),
            "iemocap" => Some(Self::iemocap()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Map a raw label string onto the class set (case-insensitive; IEMOCAP
    /// short codes are accepted for the IEMOCAP set).
    pub fn label(&self, raw: &str) -> Result<EmotionLabel> {
        let needle = raw.trim().to_lowercase();
        let needle = if self.name == "iemocap" {
            IEMOCAP_ABBREVIATIONS
                .iter()
                .find(|(short, _)| *short == needle)
                .map(|(_, long)| long.to_string())
                .unwrap_or(needle)
        } else {
            needle
        };
        self.classes
            .iter()
            .position(|c| c.to_lowercase() == needle)
            .map(|class_index| EmotionLabel {
                class_index,
                class_name: self.classes[class_index].clone(),
            })
            .ok_or_else(|| Error::UnknownLabel {
                label: raw.to_string(),
                valid: self.classes.clone(),
            })
    }

    pub fn label_at(&self, class_index: usize) -> Result<EmotionLabel> {
        self.classes
            .get(class_index)
            .map(|name| EmotionLabel {
                class_index,
                class_name: name.clone(),
            })
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "class index {class_index} out of range for {} classes",
                    self.len()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub dialogue_id: String,
    /// 1-based position within the dialogue.
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub label: EmotionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub split: Split,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterance `t` using the 1-based convention.
    pub fn utterance(&self, t: usize) -> Option<&Utterance> {
        t.checked_sub(1).and_then(|i| self.utterances.get(i))
    }

    /// Checks `M >= 1`, contiguous `1..=M` indices and matching dialogue ids.
    pub fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::Data(format!(
                "dialogue {} has no utterances",
                self.id
            )));
        }
        for (i, u) in self.utterances.iter().enumerate() {
            if u.index != i + 1 {
                return Err(Error::Data(format!(
                    "dialogue {}: utterance at position {} has index {}",
                    self.id,
                    i + 1,
                    u.index
                )));
            }
            if u.dialogue_id != self.id {
                return Err(Error::Data(format!(
                    "utterance {} claims dialogue {} but sits in {}",
                    u.index, u.dialogue_id, self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub label_set: LabelSet,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<Dialogue> {
        self.dialogues
            .iter()
            .filter(|d| d.split == split)
            .cloned()
            .collect()
    }

    pub fn num_utterances(&self) -> usize {
        self.dialogues.iter().map(Dialogue::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        for d in &self.dialogues {
            if !ids.insert(d.id.as_str()) {
                return Err(Error::Data(format!("duplicate dialogue id {}", d.id)));
            }
            d.validate()?;
            for u in &d.utterances {
                let expected = self.label_set.label_at(u.label.class_index)?;
                if expected != u.label {
                    return Err(Error::Data(format!(
                        "dialogue {} utterance {}: label {:?} inconsistent with class set",
                        d.id, u.index, u.label
                    )));
                }
            }
        }
        Ok(())
    }
}
