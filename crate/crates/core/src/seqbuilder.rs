//! Packing one utterance and its speaker-prefixed context into a single
//! token-budgeted sequence:
//!
//! ```text
//! <s> past… </s></s> NAME: current </s></s> future… </s>
//! ```
//!
//! Context grows outward one step at a time: step `i` prepends utterance
//! `t-i` and appends utterance `t+i` (whichever exist and the mode allows).
//! The first step that would push the sequence past the budget is dropped as
//! a whole and growth stops. Once one side runs out of utterances the other
//! side keeps filling alone.
//!
//! Every utterance is rendered as `" NAME: text"` (or `" text"` without
//! speaker names) and tokenized independently, so its token count does not
//! depend on where it lands in the sequence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, EmotionLabel, LabelSet, Split};
use crate::error::{Error, Result};
use crate::tokenizer::{Vocab, CLS_ID, EOS_ID};

pub const DEFAULT_MAX_TOTAL_TOKENS: usize = 512;
/// CLS + two separators + EOS.
const FRAME_TOKENS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    #[serde(alias = "no_context")]
    None,
    #[serde(alias = "past")]
    PastOnly,
    #[serde(alias = "future")]
    FutureOnly,
    Both,
}

impl ContextMode {
    pub const ALL: [ContextMode; 4] = [
        ContextMode::None,
        ContextMode::PastOnly,
        ContextMode::FutureOnly,
        ContextMode::Both,
    ];

    fn uses_past(self) -> bool {
        matches!(self, ContextMode::PastOnly | ContextMode::Both)
    }

    fn uses_future(self) -> bool {
        matches!(self, ContextMode::FutureOnly | ContextMode::Both)
    }

    pub fn describe(self) -> &'static str {
        match self {
            ContextMode::None => "No past and future utterances",
            ContextMode::PastOnly => "Only past utterances",
            ContextMode::FutureOnly => "Only future utterances",
            ContextMode::Both => "Both past and future utterances",
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContextMode::None),
            "past" | "past_only" => Ok(ContextMode::PastOnly),
            "future" | "future_only" => Ok(ContextMode::FutureOnly),
            "both" => Ok(ContextMode::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown context mode {other:?} (none|past|future|both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub max_total_tokens: usize,
    pub mode: ContextMode,
    pub prepend_speaker: bool,
    pub capitalize_names: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_total_tokens: DEFAULT_MAX_TOTAL_TOKENS,
            mode: ContextMode::Both,
            prepend_speaker: true,
            capitalize_names: true,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_total_tokens < FRAME_TOKENS + 1 {
            return Err(Error::Config(format!(
                "max_total_tokens must be at least {}, got {}",
                FRAME_TOKENS + 1,
                self.max_total_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Cls,
    SpeakerName,
    UtteranceText,
    Separator,
    Eos,
}

/// Half-open token range `[start, end)`. `utterance` is the 1-based index of
/// the dialogue utterance the span was rendered from, when there is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<usize>,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub ids: Vec<u32>,
    /// Non-overlapping spans covering `ids` in order.
    pub spans: Vec<TokenSpan>,
    /// The current utterance, speaker name included.
    pub current_span: TokenSpan,
    /// Start offsets of the two separators.
    pub segment_boundaries: [usize; 2],
    pub dialogue_id: String,
    /// 1-based index of the current utterance.
    pub index: usize,
    pub split: Split,
    pub label: EmotionLabel,
}

impl PackedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Dialogue indices of every utterance present, in sequence order.
    pub fn included_utterances(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for s in &self.spans {
            if let Some(u) = s.utterance {
                if out.last() != Some(&u) {
                    out.push(u);
                }
            }
        }
        out
    }

    pub fn speaker_spans(&self) -> impl Iterator<Item = &TokenSpan> {
        self.spans
            .iter()
            .filter(|s| s.kind == SpanKind::SpeakerName)
    }

    /// Name span of the current utterance's speaker, absent without speaker names.
    pub fn current_speaker_span(&self) -> Option<TokenSpan> {
        self.speaker_spans()
            .find(|s| s.utterance == Some(self.index) && self.current_span.contains(s.start))
            .copied()
    }

    /// Check the structural invariants of a packed sequence.
    pub fn validate(&self, max_total_tokens: usize) -> Result<()> {
        let fail = |m: String| {
            Err(Error::Data(format!(
                "{}#{}: {m}",
                self.dialogue_id, self.index
            )))
        };
        let n = self.ids.len();
        if n > max_total_tokens {
            return fail(format!("length {n} exceeds budget {max_total_tokens}"));
        }
        if n < FRAME_TOKENS || self.ids[0] != CLS_ID || self.ids[n - 1] != EOS_ID {
            return fail("sequence must start with <s> and end with </s>".into());
        }
        let mut pos = 0;
        for s in &self.spans {
            if s.start != pos || s.end < s.start {
                return fail(format!("span {s:?} does not continue at {pos}"));
            }
            pos = s.end;
        }
        if pos != n {
            return fail(format!("spans cover {pos} of {n} tokens"));
        }
        let [a, b] = self.segment_boundaries;
        if !(a < b && b + 1 < n) {
            return fail("separators out of order".into());
        }
        for sep in [a, b] {
            if self.ids[sep] != EOS_ID || self.ids[sep + 1] != EOS_ID {
                return fail(format!("separator at {sep} is not two </s>"));
            }
        }
        if self.current_span.start != a + 2 || self.current_span.end != b {
            return fail("current utterance is not exactly between the separators".into());
        }
        let mut last_past = 0;
        let mut last_future = self.index;
        for s in &self.spans {
            let Some(u) = s.utterance else { continue };
            if s.end <= a {
                if u >= self.index || u < last_past {
                    return fail(format!("past segment out of order at utterance {u}"));
                }
                last_past = u;
            } else if s.start >= b + 2 {
                if u <= self.index || u < last_future {
                    return fail(format!("future segment out of order at utterance {u}"));
                }
                last_future = u;
            } else if u != self.index {
                return fail(format!("utterance {u} inside the current segment"));
            }
        }
        Ok(())
    }
}

/// One utterance rendered and tokenized: name tokens (maybe empty) then text tokens.
#[derive(Debug, Clone)]
struct RenderedUtterance {
    name: Vec<u32>,
    text: Vec<u32>,
}

impl RenderedUtterance {
    fn len(&self) -> usize {
        self.name.len() + self.text.len()
    }
}

/// A dialogue whose utterances have been rendered once, ready to pack any `t`.
pub struct EncodedDialogue<'a> {
    dialogue: &'a Dialogue,
    config: BuildConfig,
    rendered: Vec<RenderedUtterance>,
}

/// Render a speaker name the way the builder does.
pub fn render_name(display_name: &str, capitalize: bool) -> String {
    if capitalize {
        display_name.to_uppercase()
    } else {
        display_name.to_string()
    }
}

impl<'a> EncodedDialogue<'a> {
    pub fn new(dialogue: &'a Dialogue, config: BuildConfig, vocab: &Vocab) -> Result<Self> {
        config.validate()?;
        let rendered = dialogue
            .utterances
            .iter()
            .map(|u| {
                if config.prepend_speaker {
                    let name = render_name(&u.speaker.display_name, config.capitalize_names);
                    RenderedUtterance {
                        name: vocab.encode(&format!(" {name}")),
                        text: vocab.encode(&format!(": {}", u.text)),
                    }
                } else {
                    RenderedUtterance {
                        name: Vec::new(),
                        text: vocab.encode(&format!(" {}", u.text)),
                    }
                }
            })
            .collect();
        Ok(EncodedDialogue {
            dialogue,
            config,
            rendered,
        })
    }

    /// Token count of rendered utterance `t` (1-based).
    pub fn utterance_tokens(&self, t: usize) -> usize {
        self.rendered[t - 1].len()
    }

    pub fn pack(&self, t: usize) -> Result<PackedSequence> {
        let m = self.dialogue.len();
        if t == 0 || t > m {
            return Err(Error::InvalidArgument(format!(
                "utterance index {t} out of range 1..={m} for dialogue {}",
                self.dialogue.id
            )));
        }
        let budget = self.config.max_total_tokens - 2;
        let mut current = self.rendered[t - 1].clone();
        if current.len() + 4 > budget {
            let room = budget - 4;
            log::warn!(
                "dialogue {} utterance {t}: {} tokens exceed the budget, truncating to {room}",
                self.dialogue.id,
                current.len()
            );
            if current.name.len() >= room {
                current.name.truncate(room);
                current.text.clear();
            } else {
                current.text.truncate(room - current.name.len());
            }
        }

        let mut used = current.len() + 4;
        let mut past: Vec<usize> = Vec::new();
        let mut future: Vec<usize> = Vec::new();
        for i in 1.. {
            let prev = (self.config.mode.uses_past() && t > i).then(|| t - i);
            let next = (self.config.mode.uses_future() && t + i <= m).then_some(t + i);
            if prev.is_none() && next.is_none() {
                break;
            }
            let added: usize = prev
                .iter()
                .chain(next.iter())
                .map(|&u| self.utterance_tokens(u))
                .sum();
            if used + added > budget {
                break;
            }
            used += added;
            past.extend(prev);
            future.extend(next);
        }
        past.reverse();

        let mut ids = Vec::with_capacity(used + 2);
        let mut spans = Vec::new();
        let push =
            |ids: &mut Vec<u32>, spans: &mut Vec<TokenSpan>, toks: &[u32], kind, utterance| {
                if toks.is_empty() {
                    return;
                }
                spans.push(TokenSpan {
                    start: ids.len(),
                    end: ids.len() + toks.len(),
                    kind,
                    utterance,
                });
                ids.extend_from_slice(toks);
            };
        let push_utterance =
            |ids: &mut Vec<u32>, spans: &mut Vec<TokenSpan>, r: &RenderedUtterance, u| {
                push(ids, spans, &r.name, SpanKind::SpeakerName, Some(u));
                push(ids, spans, &r.text, SpanKind::UtteranceText, Some(u));
            };

        push(&mut ids, &mut spans, &[CLS_ID], SpanKind::Cls, None);
        for &u in &past {
            push_utterance(&mut ids, &mut spans, &self.rendered[u - 1], u);
        }
        let first_sep = ids.len();
        push(
            &mut ids,
            &mut spans,
            &[EOS_ID, EOS_ID],
            SpanKind::Separator,
            None,
        );
        let current_start = ids.len();
        push_utterance(&mut ids, &mut spans, &current, t);
        let current_span = TokenSpan {
            start: current_start,
            end: ids.len(),
            kind: SpanKind::UtteranceText,
            utterance: Some(t),
        };
        let second_sep = ids.len();
        push(
            &mut ids,
            &mut spans,
            &[EOS_ID, EOS_ID],
            SpanKind::Separator,
            None,
        );
        for &u in &future {
            push_utterance(&mut ids, &mut spans, &self.rendered[u - 1], u);
        }
        push(&mut ids, &mut spans, &[EOS_ID], SpanKind::Eos, None);

        let utt = &self.dialogue.utterances[t - 1];
        Ok(PackedSequence {
            ids,
            spans,
            current_span,
            segment_boundaries: [first_sep, second_sep],
            dialogue_id: self.dialogue.id.clone(),
            index: t,
            split: self.dialogue.split,
            label: utt.label.clone(),
        })
    }
}

/// Pack utterance `t` (1-based) of `dialogue`.
pub fn build(
    dialogue: &Dialogue,
    t: usize,
    config: &BuildConfig,
    vocab: &Vocab,
) -> Result<PackedSequence> {
    EncodedDialogue::new(dialogue, *config, vocab)?.pack(t)
}

/// One packed sequence per utterance, in dialogue order then utterance order.
pub fn build_dataset(
    dialogues: &[Dialogue],
    config: &BuildConfig,
    vocab: &Vocab,
) -> Result<Vec<PackedSequence>> {
    config.validate()?;
    let per_dialogue: Result<Vec<Vec<PackedSequence>>> = dialogues
        .par_iter()
        .map(|d| {
            let enc = EncodedDialogue::new(d, *config, vocab)?;
            (1..=d.len()).map(|t| enc.pack(t)).collect()
        })
        .collect();
    Ok(per_dialogue?.into_iter().flatten().collect())
}

/// First line of a packed JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedHeader {
    pub vocab_size: usize,
    pub label_set: LabelSet,
    pub build: BuildConfig,
}

pub fn write_packed(
    path: &Path,
    header: &PackedHeader,
    sequences: &[PackedSequence],
) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(format!("write {}", path.display()), e);
    serde_json::to_writer(&mut out, &serde_json::json!({ "header": header }))?;
    out.write_all(b"\n").map_err(io)?;
    for s in sequences {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Deserialize)]
struct HeaderLine {
    header: PackedHeader,
}

pub fn read_packed(path: &Path) -> Result<(PackedHeader, Vec<PackedSequence>)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: u64, e: serde_json::Error| Error::Parse {
        file: path.to_path_buf(),
        line,
        message: e.to_string(),
    };
    let first = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty packed file", path.display())))?
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let header: HeaderLine = serde_json::from_str(&first).map_err(|e| parse_err(1, e))?;
    let mut sequences = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        sequences.push(serde_json::from_str(&line).map_err(|e| parse_err(i as u64 + 2, e))?);
    }
    Ok((header.header, sequences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Speaker, Utterance};

    fn dialogue(lines: &[(&str, &str)]) -> Dialogue {
        Dialogue {
            id: "d1".into(),
            split: Split::Test,
            utterances: lines
                .iter()
                .enumerate()
                .map(|(i, (who, text))| Utterance {
                    dialogue_id: "d1".into(),
                    index: i + 1,
                    speaker: Speaker::named(*who),
                    text: text.to_string(),
                    label: EmotionLabel {
                        class_index: 1,
                        class_name: "joy".into(),
                    },
                })
                .collect(),
        }
    }

    fn vocab_for(d: &Dialogue) -> Vocab {
        Vocab::train(std::slice::from_ref(d), 400).unwrap()
    }

    #[test]
    fn single_utterance_no_context() {
        let d = dialogue(&[("Joey", "How you doin'?")]);
        let vocab = vocab_for(&d);
        let cfg = BuildConfig {
            mode: ContextMode::None,
            ..Default::default()
        };
        let p = build(&d, 1, &cfg, &vocab).unwrap();
        p.validate(512).unwrap();
        assert_eq!(
            vocab.decode(&p.ids).unwrap(),
            "<s></s></s> JOEY: How you doin'?</s></s></s>"
        );
        assert_eq!(p.current_span.start, 3);
        assert_eq!(p.current_span.end, p.len() - 3);
        let name = p.current_speaker_span().unwrap();
        assert_eq!(vocab.decode(&p.ids[name.start..name.end]).unwrap(), " JOEY");
    }

    #[test]
    fn both_mode_renders_names_around_current() {
        let d = dialogue(&[("Ross", "Hi."), ("Joey", "Hey!"), ("Ross", "What's up?")]);
        let vocab = vocab_for(&d);
        let p = build(&d, 2, &BuildConfig::default(), &vocab).unwrap();
        p.validate(512).unwrap();
        assert_eq!(
            vocab.decode(&p.ids).unwrap(),
            "<s> ROSS: Hi.</s></s> JOEY: Hey!</s></s> ROSS: What's up?</s>"
        );
        assert_eq!(p.included_utterances(), vec![1, 2, 3]);
    }

    #[test]
    fn past_only_on_first_utterance_has_empty_past() {
        let d = dialogue(&[("A", "one"), ("B", "two")]);
        let vocab = vocab_for(&d);
        let cfg = BuildConfig {
            mode: ContextMode::PastOnly,
            ..Default::default()
        };
        let p = build(&d, 1, &cfg, &vocab).unwrap();
        assert_eq!(p.segment_boundaries[0], 1);
        assert_eq!(p.included_utterances(), vec![1]);
    }

    #[test]
    fn no_speaker_removes_name_spans() {
        let d = dialogue(&[("Ann", "hello"), ("Bob", "bye")]);
        let vocab = vocab_for(&d);
        let cfg = BuildConfig {
            prepend_speaker: false,
            ..Default::default()
        };
        let p = build(&d, 1, &cfg, &vocab).unwrap();
        assert_eq!(p.speaker_spans().count(), 0);
        assert_eq!(
            vocab.decode(&p.ids).unwrap(),
            "<s></s></s> hello</s></s> bye</s>"
        );
    }

    #[test]
    fn capitalization_toggle() {
        let d = dialogue(&[("Ann", "hello")]);
        let vocab = vocab_for(&d);
        let cfg = BuildConfig {
            capitalize_names: false,
            ..Default::default()
        };
        let p = build(&d, 1, &cfg, &vocab).unwrap();
        assert!(vocab.decode(&p.ids).unwrap().contains(" Ann: hello"));
    }

    #[test]
    fn out_of_range_index() {
        let d = dialogue(&[("A", "x")]);
        let vocab = vocab_for(&d);
        assert!(build(&d, 0, &BuildConfig::default(), &vocab).is_err());
        assert!(build(&d, 2, &BuildConfig::default(), &vocab).is_err());
    }

    #[test]
    fn empty_text_is_kept() {
        let d = dialogue(&[("A", "")]);
        let vocab = vocab_for(&d);
        let p = build(&d, 1, &BuildConfig::default(), &vocab).unwrap();
        p.validate(512).unwrap();
        assert_eq!(vocab.decode(&p.ids).unwrap(), "<s></s></s> A: </s></s></s>");
    }

    #[test]
    fn oversized_current_is_truncated() {
        let long = "word ".repeat(100);
        let d = dialogue(&[("A", "short"), ("B", &long)]);
        let vocab = vocab_for(&d);
        let cfg = BuildConfig {
            max_total_tokens: 40,
            ..Default::default()
        };
        let p = build(&d, 2, &cfg, &vocab).unwrap();
        assert_eq!(p.len(), 40);
        p.validate(40).unwrap();
        assert!(p.current_speaker_span().is_some());
    }

    #[test]
    fn dataset_is_one_per_utterance_in_order() {
        let d = dialogue(&[("A", "one"), ("B", "two"), ("A", "three")]);
        let vocab = vocab_for(&d);
        let out = build_dataset(&[d.clone(), d], &BuildConfig::default(), &vocab).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(
            out.iter().map(|p| p.index).collect::<Vec<_>>(),
            vec![1, 2, 3, 1, 2, 3]
        );
    }

    #[test]
    fn packed_file_roundtrip() {
        let d = dialogue(&[("A", "one"), ("B", "two")]);
        let vocab = vocab_for(&d);
        let seqs =
            build_dataset(std::slice::from_ref(&d), &BuildConfig::default(), &vocab).unwrap();
        let header = PackedHeader {
            vocab_size: vocab.len(),
            label_set: LabelSet::meld(),
            build: BuildConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("packed.jsonl");
        write_packed(&p, &header, &seqs).unwrap();
        let (h, s) = read_packed(&p).unwrap();
        assert_eq!(h, header);
        assert_eq!(s, seqs);
    }
}
