//! Context-mode and speaker-name ablation over several seeds, printed as a
//! markdown table.
//!
//! `cargo run --release --example ablation`

use erc::corpus::{generate_synthetic, LabelRule, Split, SyntheticConfig};
use erc::evaluation::{run_ablation, AblationCell, AblationSpec};
use erc::model::ModelConfig;
use erc::seqbuilder::{BuildConfig, ContextMode};
use erc::tokenizer::Vocab;
use erc::training::TrainConfig;

fn main() -> erc::Result<()> {
    let synth = SyntheticConfig {
        rule: LabelRule::ContextDependent,
        n_dialogues: 120,
        ..Default::default()
    };
    let corpus = generate_synthetic(&synth, 7)?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 600)?;
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
    let spec = AblationSpec {
        cells,
        seeds: vec![0, 1],
    };
    let model = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 32,
        n_heads: 2,
        n_layers: 2,
        d_ff: 64,
        n_classes: corpus.label_set.len(),
        ..Default::default()
    };
    let train = TrainConfig {
        peak_lr: 3e-3,
        ..Default::default()
    };
    let table = run_ablation(
        &spec,
        &corpus,
        &vocab,
        &BuildConfig::default(),
        &model,
        &train,
    )?;
    print!("{}", table.to_markdown("synthetic (context-dependent)"));
    Ok(())
}
