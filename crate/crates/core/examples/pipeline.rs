//! End-to-end run: corpus, tokenizer, packing, training, evaluation and
//! attention reports, driven by one config and recorded in a manifest.
//!
//! `cargo run --release --example pipeline -- [config.json]`

use erc::corpus::{LabelRule, SyntheticConfig};
use erc::model::ModelConfig;
use erc::pipeline::{run_pipeline, CorpusSource, ExperimentConfig, InspectConfig};
use erc::seqbuilder::{BuildConfig, ContextMode};
use erc::training::TrainConfig;

fn main() -> erc::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_file(path.as_ref())?,
        None => ExperimentConfig {
            run_dir: std::env::temp_dir().join("erc_example_pipeline"),
            corpus: CorpusSource {
                synthetic: Some(SyntheticConfig {
                    rule: LabelRule::SpeakerDependent,
                    n_dialogues: 120,
                    ..Default::default()
                }),
                ..Default::default()
            },
            vocab_size: 600,
            build: BuildConfig {
                mode: ContextMode::None,
                ..Default::default()
            },
            model: ModelConfig {
                d_model: 32,
                n_heads: 2,
                n_layers: 2,
                d_ff: 64,
                ..Default::default()
            },
            train: TrainConfig {
                peak_lr: 3e-3,
                ..Default::default()
            },
            seeds: vec![0, 1],
            inspect: InspectConfig {
                n_correct: 3,
                n_incorrect: 3,
                ..Default::default()
            },
            ..Default::default()
        },
    };
    if cfg.run_dir.exists() {
        std::fs::remove_dir_all(&cfg.run_dir)
            .map_err(|e| erc::Error::io("clearing run directory", e))?;
    }
    let manifest = run_pipeline(&cfg)?;
    for stage in &manifest.stages {
        println!("{:<10} {:?} {:?}", stage.name, stage.status, stage.outputs);
    }
    let metrics = std::fs::read_to_string(cfg.run_dir.join("metrics.json"))
        .map_err(|e| erc::Error::io("reading metrics", e))?;
    println!("{metrics}");
    Ok(())
}
