//! Head-averaged attention analysis: top-k attended tokens for a query,
//! highlight expansion over speaker-name spans, the speaker-attention
//! statistic and static HTML reports.

mod html;

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::evaluation::ScoredSequence;
use crate::model::{AttentionTensor, ModelParams, Prediction};
use crate::seqbuilder::PackedSequence;
use crate::tokenizer::Vocab;

pub use html::render_html;

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    First,
    Last,
    Index(usize),
}

impl LayerSelector {
    pub fn resolve(self, n_layers: usize) -> Result<usize> {
        let idx = match self {
            LayerSelector::First => 0,
            LayerSelector::Last => n_layers.saturating_sub(1),
            LayerSelector::Index(k) => k,
        };
        if idx >= n_layers {
            return Err(Error::InvalidArgument(format!(
                "layer {idx} out of range for {n_layers} layers"
            )));
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySpec {
    /// Tokens of the current utterance's speaker name.
    CurrentSpeakerTokens,
    /// The classification token at position 0.
    ClsToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionQuery {
    pub layer: LayerSelector,
    pub query: QuerySpec,
    pub top_k: usize,
}

impl AttentionQuery {
    /// First layer, current-speaker query.
    pub fn speaker(top_k: usize) -> Self {
        AttentionQuery {
            layer: LayerSelector::First,
            query: QuerySpec::CurrentSpeakerTokens,
            top_k,
        }
    }

    /// Last layer, classification-token query.
    pub fn cls(top_k: usize) -> Self {
        AttentionQuery {
            layer: LayerSelector::Last,
            query: QuerySpec::ClsToken,
            top_k,
        }
    }
}

/// `(query, key)` attention of one layer averaged over heads.
pub fn head_mean(attn: &AttentionTensor, layer: usize) -> Result<Array2<f64>> {
    if layer >= attn.n_layers() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range for {} layers",
            attn.n_layers()
        )));
    }
    let per_layer = attn.weights.index_axis(Axis(0), layer);
    Ok(per_layer.mean_axis(Axis(0)).expect("at least one head"))
}

/// The `k` largest entries of `row`, by descending weight then ascending
/// position.
pub fn top_k_positions(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Query positions selected by `spec`.
pub fn query_positions(seq: &PackedSequence, spec: QuerySpec) -> Result<Vec<usize>> {
    match spec {
        QuerySpec::ClsToken => Ok(vec![0]),
        QuerySpec::CurrentSpeakerTokens => seq
            .current_speaker_span()
            .map(|s| (s.start..s.end).collect())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{}#{} has no speaker name span (built without speaker names)",
                    seq.dialogue_id, seq.index
                ))
            }),
    }
}

/// Ranks key positions for `query`. Multi-token queries average their rows
/// of the head-mean matrix first.
pub fn top_attended(
    attn: &AttentionTensor,
    seq: &PackedSequence,
    query: &AttentionQuery,
) -> Result<Vec<usize>> {
    if query.top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    if attn.seq_len() != seq.len() {
        return Err(Error::InvalidArgument(format!(
            "attention covers {} positions but the sequence has {}",
            attn.seq_len(),
            seq.len()
        )));
    }
    let layer = query.layer.resolve(attn.n_layers())?;
    let mean = head_mean(attn, layer)?;
    let queries = query_positions(seq, query.query)?;
    let mut row = vec![0.0; seq.len()];
    for &q in &queries {
        for (acc, w) in row.iter_mut().zip(mean.row(q)) {
            *acc += w;
        }
    }
    row.iter_mut().for_each(|v| *v /= queries.len() as f64);
    Ok(top_k_positions(&row, query.top_k))
}

/// Adds every position of a speaker-name span that already contains a
/// highlighted position.
pub fn expand_name_spans(highlights: &BTreeSet<usize>, seq: &PackedSequence) -> BTreeSet<usize> {
    let mut out = highlights.clone();
    for span in seq.speaker_spans() {
        if highlights.iter().any(|&p| span.contains(p)) {
            out.extend(span.start..span.end);
        }
    }
    out
}

/// Positions of every name span whose tokens equal the current speaker's.
pub fn target_speaker_positions(seq: &PackedSequence) -> BTreeSet<usize> {
    let Some(current) = seq.current_speaker_span() else {
        return BTreeSet::new();
    };
    let name = &seq.ids[current.start..current.end];
    seq.speaker_spans()
        .filter(|s| &seq.ids[s.start..s.end] == name)
        .flat_map(|s| s.start..s.end)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportToken {
    pub position: usize,
    pub text: String,
    pub current: bool,
    pub green: bool,
    pub yellow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightReport {
    pub dialogue_id: String,
    pub index: usize,
    pub tokens: Vec<ReportToken>,
    pub predicted: String,
    pub gold: String,
    pub correct: bool,
    pub top_k: usize,
    /// Raw top-k of the first layer, current-speaker query (empty without names).
    pub speaker_top: Vec<usize>,
    /// Raw top-k of the last layer, classification-token query.
    pub cls_top: Vec<usize>,
    /// Per layer: does the classification token's top-k include a token of
    /// the current speaker's name?
    pub cls_attends_speaker_by_layer: Vec<bool>,
}

impl HighlightReport {
    /// Last-layer value of [`cls_attends_speaker_by_layer`](Self::cls_attends_speaker_by_layer).
    pub fn cls_attends_speaker(&self) -> bool {
        self.cls_attends_speaker_by_layer
            .last()
            .copied()
            .unwrap_or(false)
    }
}

/// Splits `ids` into display units whose bytes are valid UTF-8 on their own,
/// so multi-byte characters spread over several tokens stay intact. Returns
/// `(text, positions)` per unit.
fn display_units(ids: &[u32], vocab: &Vocab) -> Result<Vec<(String, Vec<usize>)>> {
    let mut units = Vec::new();
    let mut bytes = Vec::new();
    let mut positions = Vec::new();
    for (pos, &id) in ids.iter().enumerate() {
        bytes.extend_from_slice(vocab.token_bytes(id)?);
        positions.push(pos);
        if let Ok(text) = std::str::from_utf8(&bytes) {
            units.push((text.to_string(), std::mem::take(&mut positions)));
            bytes.clear();
        }
    }
    if !positions.is_empty() {
        units.push((String::from_utf8_lossy(&bytes).into_owned(), positions));
    }
    Ok(units)
}

pub fn build_report(
    seq: &PackedSequence,
    prediction: &Prediction,
    attn: &AttentionTensor,
    vocab: &Vocab,
    labels: &LabelSet,
    top_k: usize,
) -> Result<HighlightReport> {
    if seq.spans.last().map(|s| s.end) != Some(seq.len()) {
        return Err(Error::InvalidArgument(format!(
            "{}#{}: spans do not cover the {} ids",
            seq.dialogue_id,
            seq.index,
            seq.len()
        )));
    }
    let cls_top = top_attended(attn, seq, &AttentionQuery::cls(top_k))?;
    let speaker_top = if seq.current_speaker_span().is_some() {
        top_attended(attn, seq, &AttentionQuery::speaker(top_k))?
    } else {
        Vec::new()
    };
    let targets = target_speaker_positions(seq);
    let cls_attends_speaker_by_layer = (0..attn.n_layers())
        .map(|l| {
            let q = AttentionQuery {
                layer: LayerSelector::Index(l),
                query: QuerySpec::ClsToken,
                top_k,
            };
            Ok(top_attended(attn, seq, &q)?
                .iter()
                .any(|p| targets.contains(p)))
        })
        .collect::<Result<Vec<bool>>>()?;

    let green = expand_name_spans(&speaker_top.iter().copied().collect(), seq);
    let yellow = expand_name_spans(&cls_top.iter().copied().collect(), seq);
    let current = seq.current_span;
    let mut tokens = Vec::new();
    for (text, positions) in display_units(&seq.ids, vocab)? {
        let position = positions[0];
        tokens.push(ReportToken {
            position,
            text,
            current: positions.iter().all(|&p| current.contains(p)),
            green: positions.iter().any(|p| green.contains(p)),
            yellow: positions.iter().any(|p| yellow.contains(p)),
        });
    }
    let predicted = prediction.predicted();
    Ok(HighlightReport {
        dialogue_id: seq.dialogue_id.clone(),
        index: seq.index,
        tokens,
        predicted: labels.label_at(predicted)?.class_name,
        gold: seq.label.class_name.clone(),
        correct: predicted == seq.label.class_index,
        top_k,
        speaker_top,
        cls_top,
        cls_attends_speaker_by_layer,
    })
}

/// Runs the model with attention collection and renders one HTML document.
pub fn render_report(
    params: &ModelParams,
    seq: &PackedSequence,
    vocab: &Vocab,
    labels: &LabelSet,
    top_k: usize,
) -> Result<(HighlightReport, String)> {
    let (prediction, attn) = params.forward(&seq.ids, true)?;
    let attn = attn.expect("attention requested");
    let report = build_report(seq, &prediction, &attn, vocab, labels, top_k)?;
    let html = render_html(&report);
    Ok((report, html))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerAttentionStat {
    pub overall: f64,
    /// Absent when there is no report of that kind.
    pub correct: Option<f64>,
    pub incorrect: Option<f64>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Overall fraction computed at each layer.
    pub by_layer: Vec<f64>,
}

/// Fraction of reports whose last-layer classification-token top-k includes
/// the current speaker's name, overall and split by correctness.
pub fn speaker_attention_stat(reports: &[HighlightReport]) -> Result<SpeakerAttentionStat> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to summarize".into()));
    }
    let frac = |rs: &[&HighlightReport]| {
        (!rs.is_empty())
            .then(|| rs.iter().filter(|r| r.cls_attends_speaker()).count() as f64 / rs.len() as f64)
    };
    let all: Vec<&HighlightReport> = reports.iter().collect();
    let (correct, incorrect): (Vec<&HighlightReport>, Vec<&HighlightReport>) =
        all.iter().partition(|r| r.correct);
    let n_layers = reports
        .iter()
        .map(|r| r.cls_attends_speaker_by_layer.len())
        .max()
        .unwrap_or(0);
    let by_layer = (0..n_layers)
        .map(|l| {
            reports
                .iter()
                .filter(|r| {
                    r.cls_attends_speaker_by_layer
                        .get(l)
                        .copied()
                        .unwrap_or(false)
                })
                .count() as f64
                / reports.len() as f64
        })
        .collect();
    Ok(SpeakerAttentionStat {
        overall: frac(&all).expect("non-empty"),
        correct: frac(&correct),
        incorrect: frac(&incorrect),
        n_correct: correct.len(),
        n_incorrect: incorrect.len(),
        by_layer,
    })
}

/// Seeded sample without replacement: `n_correct` correctly and
/// `n_incorrect` incorrectly classified sequences, each stratum kept in
/// input order.
pub fn sample_for_analysis(
    scored: &[ScoredSequence],
    n_correct: usize,
    n_incorrect: usize,
    seed: u64,
) -> Result<Vec<ScoredSequence>> {
    let (correct, incorrect): (Vec<usize>, Vec<usize>) =
        (0..scored.len()).partition(|&i| scored[i].correct());
    if correct.len() < n_correct || incorrect.len() < n_incorrect {
        return Err(Error::Data(format!(
            "requested {n_correct} correct and {n_incorrect} incorrect samples but only {} and {} are available",
            correct.len(),
            incorrect.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: Vec<usize>, n: usize| {
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, n).copied().collect();
        chosen.sort_unstable();
        chosen
    };
    let mut out: Vec<ScoredSequence> = pick(correct, n_correct)
        .into_iter()
        .map(|i| scored[i].clone())
        .collect();
    out.extend(
        pick(incorrect, n_incorrect)
            .into_iter()
            .map(|i| scored[i].clone()),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, EmotionLabel, Speaker, Split, Utterance};
    use crate::seqbuilder::{build, BuildConfig};
    use ndarray::Array4;

    fn dialogue() -> Dialogue {
        let label = EmotionLabel {
            class_index: 0,
            class_name: "neutral".into(),
        };
        let lines = [
            ("Joey", "How you doin'?"),
            ("Rachel", "Fine."),
            ("Joey", "Great!"),
        ];
        Dialogue {
            id: "d1".into(),
            split: Split::Test,
            utterances: lines
                .iter()
                .enumerate()
                .map(|(i, (s, t))| Utterance {
                    dialogue_id: "d1".into(),
                    index: i + 1,
                    speaker: Speaker::named(*s),
                    text: t.to_string(),
                    label: label.clone(),
                })
                .collect(),
        }
    }

    fn fixture() -> (Vocab, PackedSequence) {
        let d = dialogue();
        let vocab = Vocab::train(std::slice::from_ref(&d), 270).unwrap();
        let seq = build(&d, 3, &BuildConfig::default(), &vocab).unwrap();
        (vocab, seq)
    }

    fn uniform(layers: usize, heads: usize, n: usize) -> AttentionTensor {
        AttentionTensor {
            weights: Array4::from_elem((layers, heads, n, n), 1.0 / n as f64),
        }
    }

    #[test]
    fn head_mean_averages_heads() {
        let mut t = uniform(1, 2, 3);
        t.weights[[0, 0, 0, 0]] = 1.0;
        t.weights[[0, 0, 0, 1]] = 0.0;
        t.weights[[0, 0, 0, 2]] = 0.0;
        let m = head_mean(&t, 0).unwrap();
        assert!((m[[0, 0]] - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((m.row(0).sum() - 1.0).abs() < 1e-12);
        assert!(head_mean(&t, 1).is_err());
    }

    #[test]
    fn top_k_breaks_ties_by_position() {
        assert_eq!(top_k_positions(&[0.2, 0.4, 0.2, 0.2], 3), vec![1, 0, 2]);
        assert_eq!(top_k_positions(&[0.1, 0.9], 5), vec![1, 0]);
    }

    #[test]
    fn point_mass_is_top_one() {
        let (_, seq) = fixture();
        let n = seq.len();
        let mut t = uniform(2, 1, n);
        let j = n - 3;
        for k in 0..n {
            t.weights[[1, 0, 0, k]] = if k == j { 1.0 } else { 0.0 };
        }
        assert_eq!(
            top_attended(&t, &seq, &AttentionQuery::cls(1)).unwrap(),
            vec![j]
        );
    }

    #[test]
    fn speaker_query_needs_names() {
        let d = dialogue();
        let vocab = Vocab::train(std::slice::from_ref(&d), 270).unwrap();
        let cfg = BuildConfig {
            prepend_speaker: false,
            ..Default::default()
        };
        let seq = build(&d, 2, &cfg, &vocab).unwrap();
        let t = uniform(1, 1, seq.len());
        assert!(top_attended(&t, &seq, &AttentionQuery::speaker(3)).is_err());
    }

    #[test]
    fn expansion_covers_whole_name() {
        let (_, seq) = fixture();
        let span = seq.current_speaker_span().unwrap();
        assert!(span.len() >= 2, "name should split into several tokens");
        let one: BTreeSet<usize> = [span.start + 1].into();
        let expanded = expand_name_spans(&one, &seq);
        assert_eq!(expanded, (span.start..span.end).collect());
        let outside: BTreeSet<usize> = [0].into();
        assert_eq!(expand_name_spans(&outside, &seq), outside);
    }

    #[test]
    fn target_positions_cover_every_mention() {
        let (_, seq) = fixture();
        let targets = target_speaker_positions(&seq);
        let joey_spans = seq
            .speaker_spans()
            .filter(|s| s.utterance != Some(2))
            .count();
        assert_eq!(joey_spans, 2);
        let expected: usize = seq
            .speaker_spans()
            .filter(|s| s.utterance != Some(2))
            .map(|s| s.len())
            .sum();
        assert_eq!(targets.len(), expected);
    }

    #[test]
    fn display_units_keep_multibyte_characters() {
        let d = dialogue();
        let vocab = Vocab::train(std::slice::from_ref(&d), 270).unwrap();
        let ids = vocab.encode("café ☕");
        let units = display_units(&ids, &vocab).unwrap();
        let joined: String = units.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(joined, "café ☕");
        assert!(units.iter().all(|(t, _)| !t.contains('\u{FFFD}')));
    }
}
