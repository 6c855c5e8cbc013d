//! Fine-tunes a small encoder on a synthetic task and keeps the epoch with
//! the best validation weighted F1.
//!
//! `cargo run --release --example training -- speaker_dependent`

use erc::corpus::{generate_synthetic, LabelRule, Split, SyntheticConfig};
use erc::evaluation::percent;
use erc::model::ModelConfig;
use erc::seqbuilder::{build_dataset, BuildConfig, ContextMode};
use erc::tokenizer::Vocab;
use erc::training::{train, PackedSplits, TrainConfig};

fn main() -> erc::Result<()> {
    let rule = match std::env::args().nth(1).as_deref() {
        Some("speaker_dependent") => LabelRule::SpeakerDependent,
        Some("context_dependent") => LabelRule::ContextDependent,
        _ => LabelRule::ContentOnly,
    };
    let corpus = generate_synthetic(
        &SyntheticConfig {
            rule,
            ..Default::default()
        },
        7,
    )?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 600)?;
    let mode = if rule == LabelRule::ContextDependent {
        ContextMode::Both
    } else {
        ContextMode::None
    };
    let build = BuildConfig {
        mode,
        ..Default::default()
    };
    let data = PackedSplits::from_sequences(build_dataset(&corpus.dialogues, &build, &vocab)?);
    println!(
        "{rule:?}: {} / {} / {} sequences",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    let model = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 32,
        n_heads: 2,
        n_layers: 2,
        d_ff: 64,
        n_classes: corpus.label_set.len(),
        ..Default::default()
    };
    let cfg = TrainConfig {
        peak_lr: 3e-3,
        ..Default::default()
    };
    let out = std::env::temp_dir().join("erc_example_run");
    let (result, _) = train(&model, &data, &cfg, Some(&out))?;
    for e in &result.epochs {
        println!(
            "epoch {} loss {:.4} val weighted F1 {}",
            e.epoch,
            e.train_loss.unwrap_or(f64::NAN),
            percent(e.val_weighted_f1)
        );
    }
    println!(
        "kept epoch {} (val {}), test weighted F1 {}",
        result.selected_epoch,
        percent(result.best_val_weighted_f1),
        result.test_weighted_f1.map(percent).unwrap_or_default()
    );
    println!("run directory: {}", out.display());
    Ok(())
}
