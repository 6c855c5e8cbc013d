//! Runs the encoder on one packed sequence, inspects its attention and
//! round-trips the weights through a checkpoint file.

use erc::corpus::{generate_synthetic, Split, SyntheticConfig};
use erc::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use erc::seqbuilder::{build, BuildConfig};
use erc::tokenizer::Vocab;

fn main() -> erc::Result<()> {
    let corpus = generate_synthetic(&SyntheticConfig::default(), 1)?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 500)?;
    let seq = build(&corpus.dialogues[0], 2, &BuildConfig::default(), &vocab)?;

    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 32,
        n_heads: 2,
        n_layers: 2,
        d_ff: 64,
        n_classes: corpus.label_set.len(),
        ..Default::default()
    };
    let params = ModelParams::init(cfg, 42)?;
    println!("{} parameters", params.num_parameters());

    let (prediction, attn) = params.forward(&seq.ids, true)?;
    let attn = attn.expect("attention requested");
    println!("class probabilities {:.3?}", prediction.probabilities);
    println!(
        "attention tensor: {} layers x {} heads x {} x {}",
        attn.n_layers(),
        attn.n_heads(),
        attn.seq_len(),
        attn.seq_len()
    );
    let row = attn.row(0, 0, 0);
    println!(
        "first-layer head 0, row of <s> (first 6 keys): {:.4?}",
        &row.to_vec()[..6]
    );

    let path = std::env::temp_dir().join("erc_example.ckpt");
    save_checkpoint(&path, &params, serde_json::json!({"note": "untrained"}))?;
    let (reloaded, meta) = load_checkpoint(&path)?;
    let (again, _) = reloaded.forward(&seq.ids, false)?;
    assert_eq!(again.probabilities, prediction.probabilities);
    println!(
        "checkpoint {} reloaded ({meta}), identical output",
        path.display()
    );
    Ok(())
}
