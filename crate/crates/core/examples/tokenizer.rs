//! Learns a byte-level BPE vocabulary and shows how text splits into subwords.

use erc::corpus::{generate_synthetic, Split, SyntheticConfig};
use erc::tokenizer::Vocab;

fn main() -> erc::Result<()> {
    let corpus = generate_synthetic(&SyntheticConfig::default(), 0)?;
    let vocab = Vocab::train(&corpus.split(Split::Train), 600)?;
    println!(
        "vocabulary: {} tokens ({} merges)",
        vocab.len(),
        vocab.num_merges()
    );

    for text in [
        " JOEY: How you doin'?",
        " PHOEBE: Smelly cat, smelly cat, what are they feeding you?",
        &corpus.dialogues[0].utterances[0].text,
    ] {
        let ids = vocab.encode(text);
        let pieces: Vec<String> = ids
            .iter()
            .map(|&id| String::from_utf8_lossy(vocab.token_bytes(id).unwrap()).into_owned())
            .collect();
        println!("{text:?}\n  {} tokens: {pieces:?}", ids.len());
        assert_eq!(vocab.decode(&ids)?, erc::tokenizer::normalize(text));
    }

    let path = std::env::temp_dir().join("erc_example_vocab.json");
    vocab.save(&path)?;
    let reloaded = Vocab::load(&path)?;
    assert_eq!(
        reloaded.encode("Could this BE any clearer?"),
        vocab.encode("Could this BE any clearer?")
    );
    println!("saved and reloaded {}", path.display());
    Ok(())
}
