//! Byte-level BPE tokenizer trained on the corpus itself.
//!
//! Text is normalized by collapsing every whitespace run into a single space
//! (case is preserved), split into pieces at spaces and at letter / digit /
//! punctuation boundaries, and each piece is encoded as UTF-8 bytes which
//! are then merged by learned pair ranks. The 256 byte tokens are always in
//! the vocabulary, so encoding never fails and never needs `<unk>`.
//!
//! Id layout: `<s>`=0, `<pad>`=1, `</s>`=2, `<unk>`=3, bytes at `4..260`,
//! merged tokens after that. A segment separator is two consecutive `</s>`;
//! there is no dedicated separator id.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};

pub const CLS_TOKEN: &str = "<s>";
pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

pub const CLS_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

const NUM_SPECIAL: usize = 4;
const BYTE_OFFSET: u32 = NUM_SPECIAL as u32;
/// Specials plus the 256 byte tokens.
pub const BASE_VOCAB_SIZE: usize = NUM_SPECIAL + 256;
pub const DEFAULT_VOCAB_SIZE: usize = 4096;

/// A trained vocabulary: token bytes, merge table and special ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    /// `(left, right, result)` in rank order.
    merges: Vec<(u32, u32, u32)>,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    specials: SpecialIds,
    merges: Vec<[u32; 3]>,
    /// Informational only; tokens are rebuilt from the merges on load.
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct SpecialIds {
    cls: u32,
    pad: u32,
    eos: u32,
    unk: u32,
}

const SPECIALS: SpecialIds = SpecialIds {
    cls: CLS_ID,
    pad: PAD_ID,
    eos: EOS_ID,
    unk: UNK_ID,
};

/// Collapse each whitespace run into one ASCII space. Nothing else changes.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum CharClass {
    Letter,
    Digit,
    Other,
}

fn char_class(c: char) -> CharClass {
    if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Split normalized text into merge-isolated pieces. A space always starts a
/// new piece and sticks to the characters that follow it.
fn pieces(normalized: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut last: Option<char> = None;
    for (i, c) in normalized.char_indices() {
        let boundary = match last {
            None => false,
            Some(_) if c == ' ' => true,
            Some(' ') => false,
            Some(prev) => char_class(prev) != char_class(c),
        };
        if boundary {
            out.push(&normalized[start..i]);
            start = i;
        }
        last = Some(c);
    }
    if start < normalized.len() {
        out.push(&normalized[start..]);
    }
    out
}

fn byte_ids(piece: &str) -> Vec<u32> {
    piece.bytes().map(|b| BYTE_OFFSET + b as u32).collect()
}

fn base_tokens() -> Vec<Vec<u8>> {
    let mut tokens: Vec<Vec<u8>> = vec![
        CLS_TOKEN.as_bytes().to_vec(),
        PAD_TOKEN.as_bytes().to_vec(),
        EOS_TOKEN.as_bytes().to_vec(),
        UNK_TOKEN.as_bytes().to_vec(),
    ];
    tokens.extend((0..=255u8).map(|b| vec![b]));
    tokens
}

fn merge_word(word: &mut Vec<u32>, left: u32, right: u32, result: u32) {
    let mut i = 0;
    let mut out = Vec::with_capacity(word.len());
    while i < word.len() {
        if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
            out.push(result);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

impl Vocab {
    /// Learn merges from every utterance text in `corpus` until the vocabulary
    /// holds `target_size` tokens or no adjacent pair is left.
    ///
    /// The most frequent pair wins; ties go to the smallest `(left, right)` id
    /// pair, so training is deterministic.
    pub fn train(corpus: &[Dialogue], target_size: usize) -> Result<Vocab> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot train a vocabulary on an empty corpus".into(),
            ));
        }
        if target_size < BASE_VOCAB_SIZE {
            return Err(Error::InvalidArgument(format!(
                "target vocabulary size {target_size} is below the byte alphabet plus specials ({BASE_VOCAB_SIZE})"
            )));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for u in corpus.iter().flat_map(|d| &d.utterances) {
            let text = normalize(&u.text);
            for p in pieces(&text) {
                *counts.entry(p.to_string()).or_default() += 1;
            }
        }
        let mut words: Vec<(String, u64)> = counts.into_iter().collect();
        words.sort();
        let mut words: Vec<(Vec<u32>, u64)> =
            words.into_iter().map(|(w, c)| (byte_ids(&w), c)).collect();

        let mut tokens = base_tokens();
        let mut index: HashMap<Vec<u8>, u32> = tokens
            .iter()
            .enumerate()
            .skip(NUM_SPECIAL)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut merges = Vec::new();

        while tokens.len() < target_size {
            let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
            for (w, c) in &words {
                for pair in w.windows(2) {
                    *pairs.entry((pair[0], pair[1])).or_default() += c;
                }
            }
            let Some((&(left, right), _)) = pairs
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            else {
                break;
            };
            let mut bytes = tokens[left as usize].clone();
            bytes.extend_from_slice(&tokens[right as usize]);
            let result = match index.get(&bytes) {
                Some(&existing) => existing,
                None => {
                    let id = tokens.len() as u32;
                    index.insert(bytes.clone(), id);
                    tokens.push(bytes);
                    id
                }
            };
            merges.push((left, right, result));
            for (w, _) in words.iter_mut() {
                merge_word(w, left, right, result);
            }
        }
        Ok(Vocab::from_parts(tokens, merges))
    }

    fn from_parts(tokens: Vec<Vec<u8>>, merges: Vec<(u32, u32, u32)>) -> Vocab {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r, res))| ((l, r), (rank, res)))
            .collect();
        Vocab {
            tokens,
            merges,
            ranks,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIAL
    }

    /// Raw bytes of a token; specials yield their literal rendering.
    pub fn token_bytes(&self, id: u32) -> Result<&[u8]> {
        self.tokens
            .get(id as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "token id {id} out of range (vocab size {})",
                    self.len()
                ))
            })
    }

    /// Id of the token whose bytes are exactly `text`, if any.
    pub fn token_id(&self, text: &str) -> Option<u32> {
        self.tokens
            .iter()
            .position(|t| t.as_slice() == text.as_bytes())
            .map(|i| i as u32)
    }

    fn encode_piece(&self, piece: &str, out: &mut Vec<u32>) {
        let mut word = byte_ids(piece);
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|p| {
                    self.ranks
                        .get(&(p[0], p[1]))
                        .map(|&(rank, res)| (rank, p[0], p[1], res))
                })
                .min();
            match best {
                Some((_, l, r, res)) => merge_word(&mut word, l, r, res),
                None => break,
            }
        }
        out.extend(word);
    }

    /// Encode text after whitespace normalization. Never emits special ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let text = normalize(text);
        let mut out = Vec::with_capacity(text.len() / 2);
        for p in pieces(&text) {
            self.encode_piece(p, &mut out);
        }
        out
    }

    /// Concatenate token bytes; specials render as their literal strings.
    /// Invalid UTF-8 (only possible for hand-made id lists) is replaced.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for &id in ids {
            bytes.extend_from_slice(self.token_bytes(id)?);
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            version: 1,
            specials: SPECIALS,
            merges: self.merges.iter().map(|&(l, r, res)| [l, r, res]).collect(),
            tokens: self
                .tokens
                .iter()
                .map(|t| String::from_utf8_lossy(t).into_owned())
                .collect(),
        };
        let json = serde_json::to_string(&file)?;
        fs::write(path, json).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Vocab> {
        let file: VocabFile = serde_json::from_str(raw)?;
        if file.version != 1 || file.specials != SPECIALS {
            return Err(Error::Data("unsupported vocabulary file layout".into()));
        }
        let mut tokens = base_tokens();
        let mut merges = Vec::with_capacity(file.merges.len());
        for [l, r, res] in file.merges {
            let (lu, ru, resu) = (l as usize, r as usize, res as usize);
            if lu < NUM_SPECIAL || ru < NUM_SPECIAL || lu >= tokens.len() || ru >= tokens.len() {
                return Err(Error::Data(format!(
                    "merge ({l}, {r}) references an unknown token"
                )));
            }
            let mut bytes = tokens[lu].clone();
            bytes.extend_from_slice(&tokens[ru]);
            if resu == tokens.len() {
                tokens.push(bytes);
            } else if tokens.get(resu) != Some(&bytes) {
                return Err(Error::Data(format!(
                    "merge ({l}, {r}) -> {res} is inconsistent"
                )));
            }
            merges.push((l, r, res));
        }
        Ok(Vocab::from_parts(tokens, merges))
    }
}
