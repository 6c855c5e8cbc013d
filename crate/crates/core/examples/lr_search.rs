//! Log-uniform search for the peak learning rate on a data subsample.

use erc::corpus::{generate_synthetic, Split, SyntheticConfig};
use erc::model::ModelConfig;
use erc::seqbuilder::{build_dataset, BuildConfig};
use erc::tokenizer::Vocab;
use erc::training::{search_peak_lr, LrSearchConfig, PackedSplits, TrainConfig};

fn main() -> erc::Result<()> {
    let corpus = generate_synthetic(&SyntheticConfig::default(), 3)?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 500)?;
    let data = PackedSplits::from_sequences(build_dataset(
        &corpus.dialogues,
        &BuildConfig::default(),
        &vocab,
    )?);
    let model = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        n_classes: corpus.label_set.len(),
        ..Default::default()
    };
    let train = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let search = LrSearchConfig {
        trials: 5,
        min_lr: 1e-4,
        max_lr: 3e-2,
        data_fraction: 0.5,
        seed: 0,
    };
    let result = search_peak_lr(&model, &data, &train, &search)?;
    for t in &result.trials {
        match t.val_loss {
            Some(loss) => println!("lr {:.2e}: validation loss {loss:.4}", t.lr),
            None => println!("lr {:.2e}: diverged", t.lr),
        }
    }
    println!("best peak learning rate {:.2e}", result.best_lr);
    Ok(())
}
