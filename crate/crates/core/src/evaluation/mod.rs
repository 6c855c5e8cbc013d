//! Weighted f1, confusion matrices and the context/speaker ablation grid.

mod metrics;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, Prediction};
use crate::seqbuilder::{build_dataset, BuildConfig, ContextMode, PackedSequence};
use crate::tokenizer::Vocab;
use crate::training::{run_seeds, PackedSplits, TrainConfig};

pub use metrics::{percent, weighted_f1, EvalReport};

/// Inference over packed sequences, in input order.
pub fn predict(params: &ModelParams, sequences: &[PackedSequence]) -> Result<Vec<Prediction>> {
    sequences
        .par_iter()
        .map(|s| params.forward(&s.ids, false).map(|(p, _)| p))
        .collect()
}

/// One scored sequence, as produced by [`evaluate_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub sequence: PackedSequence,
    pub prediction: Prediction,
}

impl ScoredSequence {
    pub fn correct(&self) -> bool {
        self.prediction.predicted() == self.sequence.label.class_index
    }
}

fn check_classes(params: &ModelParams, labels: &LabelSet) -> Result<()> {
    if params.config.n_classes != labels.len() {
        return Err(Error::Config(format!(
            "model has {} output classes but label set {} has {}",
            params.config.n_classes,
            labels.name,
            labels.len()
        )));
    }
    Ok(())
}

pub fn evaluate(
    params: &ModelParams,
    sequences: &[PackedSequence],
    labels: &LabelSet,
) -> Result<EvalReport> {
    Ok(evaluate_detailed(params, sequences, labels)?.0)
}

/// [`evaluate`] plus the per-sequence predictions.
pub fn evaluate_detailed(
    params: &ModelParams,
    sequences: &[PackedSequence],
    labels: &LabelSet,
) -> Result<(EvalReport, Vec<ScoredSequence>)> {
    check_classes(params, labels)?;
    let predictions = predict(params, sequences)?;
    let pred: Vec<usize> = predictions.iter().map(|p| p.predicted()).collect();
    let gold: Vec<usize> = sequences.iter().map(|s| s.label.class_index).collect();
    let report = EvalReport::from_predictions(&pred, &gold, labels.classes.clone())?;
    let scored = sequences
        .iter()
        .cloned()
        .zip(predictions)
        .map(|(sequence, prediction)| ScoredSequence {
            sequence,
            prediction,
        })
        .collect();
    Ok((report, scored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationCell {
    pub mode: ContextMode,
    pub prepend_speaker: bool,
}

impl AblationCell {
    pub fn describe(&self) -> String {
        if self.prepend_speaker {
            self.mode.describe().to_string()
        } else {
            format!("{}, without speaker names", self.mode.describe())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub cells: Vec<AblationCell>,
    pub seeds: Vec<u64>,
}

impl Default for AblationSpec {
    /// The four context modes with speaker names, plus both-sided context
    /// without them.
    fn default() -> Self {
        let mut cells: Vec<AblationCell> = ContextMode::ALL
            .into_iter()
            .map(|mode| AblationCell {
                mode,
                prepend_speaker: true,
            })
            .collect();
        cells.push(AblationCell {
            mode: ContextMode::Both,
            prepend_speaker: false,
        });
        AblationSpec {
            cells,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "ablation needs at least one cell and one seed".into(),
            ));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if self.cells[..i].contains(c) {
                return Err(Error::Config(format!(
                    "duplicate ablation cell: {}",
                    c.describe()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub test_scores: Vec<f64>,
    pub mean_test_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, cell: AblationCell) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.cell == cell)
    }

    /// Markdown table of seed-mean test weighted f1, in percent.
    pub fn to_markdown(&self, dataset: &str) -> String {
        let mut out =
            format!("| Configuration | {dataset} weighted f1 (%) | seeds |\n|---|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                r.cell.describe(),
                percent(r.mean_test_weighted_f1),
                r.test_scores.len()
            );
        }
        out
    }
}

/// Rebuilds the packed dataset for every cell, trains once per seed and
/// reports the mean test weighted f1. `base_build` supplies the budget and
/// name rendering; each cell overrides mode and speaker prepending.
pub fn run_ablation(
    spec: &AblationSpec,
    corpus: &Corpus,
    vocab: &Vocab,
    base_build: &BuildConfig,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<AblationTable> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.cells.len());
    for &cell in &spec.cells {
        let build = BuildConfig {
            mode: cell.mode,
            prepend_speaker: cell.prepend_speaker,
            ..*base_build
        };
        let data = PackedSplits::from_sequences(build_dataset(&corpus.dialogues, &build, vocab)?);
        if data.test.is_empty() {
            return Err(Error::Data("ablation needs a non-empty test split".into()));
        }
        let summary = run_seeds(model_cfg, &data, train_cfg, &spec.seeds)?;
        let test_scores: Vec<f64> = summary
            .runs
            .iter()
            .filter_map(|r| r.test_weighted_f1)
            .collect();
        log::info!("ablation cell {}: {:?}", cell.describe(), test_scores);
        rows.push(AblationRow {
            cell,
            mean_test_weighted_f1: summary
                .mean_test_weighted_f1
                .expect("test split is non-empty"),
            test_scores,
        });
    }
    Ok(AblationTable { rows })
}
