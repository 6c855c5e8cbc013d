//! Trains briefly, then writes HTML highlight reports for sampled correct and
//! incorrect test predictions.

use std::fs;

use erc::attnreport::{render_report, sample_for_analysis, speaker_attention_stat, DEFAULT_TOP_K};
use erc::corpus::{generate_synthetic, LabelRule, Split, SyntheticConfig};
use erc::evaluation::evaluate_detailed;
use erc::model::ModelConfig;
use erc::seqbuilder::{build_dataset, BuildConfig, ContextMode};
use erc::tokenizer::Vocab;
use erc::training::{train, PackedSplits, TrainConfig};

fn main() -> erc::Result<()> {
    let synth = SyntheticConfig {
        rule: LabelRule::SpeakerDependent,
        ..Default::default()
    };
    let corpus = generate_synthetic(&synth, 5)?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 600)?;
    let build = BuildConfig {
        mode: ContextMode::None,
        ..Default::default()
    };
    let data = PackedSplits::from_sequences(build_dataset(&corpus.dialogues, &build, &vocab)?);
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
    let (_, params) = train(&model, &data, &cfg, None)?;

    let (report, scored) = evaluate_detailed(&params, &data.test, &corpus.label_set)?;
    println!("test weighted F1 {:.4}", report.weighted_f1);
    let n_correct = scored.iter().filter(|s| s.correct()).count().min(3);
    let n_incorrect = scored.iter().filter(|s| !s.correct()).count().min(3);
    let sample = sample_for_analysis(&scored, n_correct, n_incorrect, 0)?;

    let dir = std::env::temp_dir().join("erc_example_reports");
    fs::create_dir_all(&dir).map_err(|e| erc::Error::io("creating report directory", e))?;
    let mut reports = Vec::new();
    for s in &sample {
        let (r, html) = render_report(
            &params,
            &s.sequence,
            &vocab,
            &corpus.label_set,
            DEFAULT_TOP_K,
        )?;
        let path = dir.join(format!("{}_{}.html", r.dialogue_id, r.index));
        fs::write(&path, html).map_err(|e| erc::Error::io("writing report", e))?;
        println!(
            "{} predicted {:<8} gold {:<8} classifier reaches speaker: {}",
            path.display(),
            r.predicted,
            r.gold,
            r.cls_attends_speaker()
        );
        reports.push(r);
    }
    let stat = speaker_attention_stat(&reports)?;
    println!(
        "share of reports whose classifier attends the speaker name: {:.2}",
        stat.overall
    );
    Ok(())
}
