//! Seeded synthetic dialogues with a known labeling rule.
//!
//! Utterances are short runs of pronounceable filler words. The first
//! `n_classes` words of the generated lexicon are *cue words*; where a cue is
//! planted and how it maps to a label depends on the [`LabelRule`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Dialogue, LabelSet, Speaker, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Each utterance carries one cue word; label = cue class.
    ContentOnly,
    /// Each utterance carries one cue word; label = (cue + speaker rank) mod C.
    SpeakerDependent,
    /// One utterance per dialogue (the anchor) carries a cue; every utterance
    /// of the dialogue is labeled with that cue's class.
    ContextDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_dialogues: usize,
    /// Lexicon size, cue words included.
    pub vocab_size: usize,
    pub n_speakers: usize,
    pub speakers_per_dialogue: usize,
    pub n_classes: usize,
    pub min_utterances: usize,
    pub max_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub rule: LabelRule,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_dialogues: 200,
            vocab_size: 100,
            n_speakers: 4,
            speakers_per_dialogue: 2,
            n_classes: 3,
            min_utterances: 3,
            max_utterances: 8,
            min_words: 3,
            max_words: 6,
            rule: LabelRule::ContentOnly,
            train_fraction: 0.7,
            val_fraction: 0.15,
        }
    }
}

const SPEAKER_POOL: [&str; 12] = [
    "Alice", "Bruno", "Chloe", "Dmitri", "Esther", "Farid", "Greta", "Hiro", "Imani", "Jonas",
    "Keiko", "Luca",
];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const PUNCTUATION: [&str; 3] = [".", "!", "?"];

fn syllable(i: usize) -> String {
    let c = CONSONANTS[i % CONSONANTS.len()] as char;
    let v = VOWELS[i / CONSONANTS.len()] as char;
    format!("{c}{v}")
}

const N_SYLLABLES: usize = 14 * 5;
const MAX_LEXICON: usize = N_SYLLABLES * N_SYLLABLES;

/// Word `k` of the lexicon. `k -> (k * 1103 + 17) mod 4900` is a bijection,
/// so distinct `k` yield distinct two-syllable words.
fn lexicon_word(k: usize) -> String {
    let j = (k * 1103 + 17) % MAX_LEXICON;
    format!("{}{}", syllable(j % N_SYLLABLES), syllable(j / N_SYLLABLES))
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 {
            return bad(format!(
                "n_classes must be at least 2, got {}",
                self.n_classes
            ));
        }
        if self.vocab_size > MAX_LEXICON {
            return bad(format!(
                "vocab_size {} exceeds lexicon capacity {MAX_LEXICON}",
                self.vocab_size
            ));
        }
        if self.n_classes >= self.vocab_size {
            return bad(format!(
                "{} classes need {} cue words plus at least one filler word, but vocab_size is {}",
                self.n_classes, self.n_classes, self.vocab_size
            ));
        }
        if self.n_speakers == 0 || self.n_speakers > SPEAKER_POOL.len() {
            return bad(format!("n_speakers must be in 1..={}", SPEAKER_POOL.len()));
        }
        if self.speakers_per_dialogue == 0 || self.speakers_per_dialogue > self.n_speakers {
            return bad("speakers_per_dialogue must be in 1..=n_speakers".into());
        }
        if self.rule == LabelRule::SpeakerDependent && self.n_speakers < 2 {
            return bad("speaker_dependent labels need at least 2 speakers".into());
        }
        if self.min_utterances == 0 || self.min_utterances > self.max_utterances {
            return bad("need 1 <= min_utterances <= max_utterances".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words".into());
        }
        let fractions_ok = self.train_fraction > 0.0
            && self.val_fraction >= 0.0
            && self.train_fraction + self.val_fraction <= 1.0;
        if !fractions_ok {
            return bad("split fractions must be nonnegative and sum to at most 1".into());
        }
        if self.n_dialogues == 0 {
            return bad("n_dialogues must be positive".into());
        }
        Ok(())
    }

    pub fn cue_words(&self) -> Vec<String> {
        (0..self.n_classes).map(lexicon_word).collect()
    }

    pub fn filler_words(&self) -> Vec<String> {
        (self.n_classes..self.vocab_size)
            .map(lexicon_word)
            .collect()
    }

    pub fn speaker_names(&self) -> Vec<&'static str> {
        SPEAKER_POOL[..self.n_speakers].to_vec()
    }

    pub fn label_set(&self) -> LabelSet {
        LabelSet {
            name: "synthetic".into(),
            classes: (0..self.n_classes)
                .map(|k| format!("class{k:02}"))
                .collect(),
        }
    }

    fn cue_in(&self, text: &str) -> Option<usize> {
        let cues = self.cue_words();
        text.split(|c: char| !c.is_alphanumeric())
            .find_map(|w| cues.iter().position(|c| c == w))
    }

    /// Recompute the gold class of every utterance from text and speakers
    /// alone, per the configured rule.
    pub fn expected_labels(&self, dialogue: &Dialogue) -> Result<Vec<usize>> {
        let speakers = self.speaker_names();
        let missing = |i: usize| {
            Error::Data(format!(
                "dialogue {}: no cue found near utterance {i}",
                dialogue.id
            ))
        };
        match self.rule {
            LabelRule::ContentOnly => dialogue
                .utterances
                .iter()
                .map(|u| self.cue_in(&u.text).ok_or_else(|| missing(u.index)))
                .collect(),
            LabelRule::SpeakerDependent => dialogue
                .utterances
                .iter()
                .map(|u| {
                    let cue = self.cue_in(&u.text).ok_or_else(|| missing(u.index))?;
                    let rank = speakers
                        .iter()
                        .position(|s| *s == u.speaker.id)
                        .ok_or_else(|| Error::Data(format!("unknown speaker {}", u.speaker.id)))?;
                    Ok((cue + rank) % self.n_classes)
                })
                .collect(),
            LabelRule::ContextDependent => {
                let cue = dialogue
                    .utterances
                    .iter()
                    .find_map(|u| self.cue_in(&u.text))
                    .ok_or_else(|| missing(1))?;
                Ok(vec![cue; dialogue.len()])
            }
        }
    }
}

/// Generate a corpus following `config`; identical `(config, seed)` pairs give
/// identical corpora.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cues = config.cue_words();
    let fillers = config.filler_words();
    let pool = config.speaker_names();
    let label_set = config.label_set();

    let n_train = ((config.n_dialogues as f64) * config.train_fraction).round() as usize;
    let n_val = ((config.n_dialogues as f64) * config.val_fraction).round() as usize;

    let mut dialogues = Vec::with_capacity(config.n_dialogues);
    for d in 0..config.n_dialogues {
        let split = if d < n_train {
            Split::Train
        } else if d < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        let id = format!("syn{d:05}");
        let m = rng.random_range(config.min_utterances..=config.max_utterances);
        let mut cast: Vec<usize> = (0..pool.len()).collect();
        cast.shuffle(&mut rng);
        cast.truncate(config.speakers_per_dialogue);
        let anchor = rng.random_range(0..m);
        let dialogue_cue = rng.random_range(0..config.n_classes);

        let mut utterances = Vec::with_capacity(m);
        for i in 0..m {
            let speaker_rank = *cast.choose(&mut rng).expect("cast is nonempty");
            let n_words = rng.random_range(config.min_words..=config.max_words);
            let mut words: Vec<&str> = (0..n_words)
                .map(|_| fillers.choose(&mut rng).expect("fillers nonempty").as_str())
                .collect();
            let planted = match config.rule {
                LabelRule::ContentOnly | LabelRule::SpeakerDependent => {
                    Some(rng.random_range(0..config.n_classes))
                }
                LabelRule::ContextDependent => (i == anchor).then_some(dialogue_cue),
            };
            if let Some(cue) = planted {
                let at = rng.random_range(0..=words.len());
                words.insert(at, cues[cue].as_str());
            }
            let mut text = words.join(" ");
            text.push_str(PUNCTUATION.choose(&mut rng).expect("nonempty"));

            let class = match config.rule {
                LabelRule::ContentOnly => planted.expect("planted"),
                LabelRule::SpeakerDependent => {
                    (planted.expect("planted") + speaker_rank) % config.n_classes
                }
                LabelRule::ContextDependent => dialogue_cue,
            };
            utterances.push(Utterance {
                dialogue_id: id.clone(),
                index: i + 1,
                speaker: Speaker::named(pool[speaker_rank]),
                text,
                label: label_set.label_at(class)?,
            });
        }
        dialogues.push(Dialogue {
            id,
            split,
            utterances,
        });
    }
    Ok(Corpus {
        label_set,
        dialogues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_rule(rule: LabelRule) {
        let cfg = SyntheticConfig {
            rule,
            ..Default::default()
        };
        let corpus = generate_synthetic(&cfg, 5).unwrap();
        corpus.validate().unwrap();
        for d in &corpus.dialogues {
            let expected = cfg.expected_labels(d).unwrap();
            let actual: Vec<usize> = d.utterances.iter().map(|u| u.label.class_index).collect();
            assert_eq!(expected, actual, "rule {rule:?} dialogue {}", d.id);
        }
    }

    #[test]
    fn labels_are_recomputable_for_every_rule() {
        check_rule(LabelRule::ContentOnly);
        check_rule(LabelRule::SpeakerDependent);
        check_rule(LabelRule::ContextDependent);
    }

    #[test]
    fn content_only_cue_word_determines_label() {
        let cfg = SyntheticConfig::default();
        let cues = cfg.cue_words();
        let corpus = generate_synthetic(&cfg, 1).unwrap();
        for u in corpus.dialogues.iter().flat_map(|d| &d.utterances) {
            let k = u.label.class_index;
            assert!(u.text.contains(&cues[k]));
        }
    }

    #[test]
    fn speaker_dependent_same_text_different_speakers_differ() {
        let cfg = SyntheticConfig {
            rule: LabelRule::SpeakerDependent,
            ..Default::default()
        };
        let corpus = generate_synthetic(&cfg, 2).unwrap();
        let mut template = corpus.dialogues[0].clone();
        template.utterances.truncate(1);
        let mut labels = Vec::new();
        for name in cfg.speaker_names().iter().take(2) {
            template.utterances[0].speaker = Speaker::named(*name);
            labels.push(cfg.expected_labels(&template).unwrap()[0]);
        }
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SyntheticConfig::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        crate::corpus::loaders::write_native_to(&generate_synthetic(&cfg, 9).unwrap(), &mut a)
            .unwrap();
        crate::corpus::loaders::write_native_to(&generate_synthetic(&cfg, 9).unwrap(), &mut b)
            .unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        crate::corpus::loaders::write_native_to(&generate_synthetic(&cfg, 10).unwrap(), &mut c)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn inconsistent_config_is_rejected() {
        let cfg = SyntheticConfig {
            n_classes: 100,
            vocab_size: 100,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg, 0).is_err());
        let cfg = SyntheticConfig {
            n_classes: 1,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg, 0).is_err());
    }

    #[test]
    fn lexicon_words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..MAX_LEXICON).map(lexicon_word).collect();
        assert_eq!(words.len(), MAX_LEXICON);
    }
}
