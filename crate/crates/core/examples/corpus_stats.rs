//! Loads a corpus and prints per-split dialogue statistics.
//!
//! ```text
//! cargo run --example corpus_stats                      # synthetic corpus
//! cargo run --example corpus_stats -- path/to/meld meld_csv
//! ```

use std::path::Path;

use erc::corpus::{
    compute_stats, generate_synthetic, load_corpus, CorpusFormat, LoadOptions, SyntheticConfig,
};

fn main() -> erc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let corpus = match args.as_slice() {
        [path, format] => {
            let format: CorpusFormat = format.parse()?;
            load_corpus(Path::new(path), format, &LoadOptions::default())?
        }
        [path] => load_corpus(
            Path::new(path),
            CorpusFormat::NativeJsonl,
            &LoadOptions::default(),
        )?,
        _ => generate_synthetic(&SyntheticConfig::default(), 0)?,
    };

    println!(
        "{} dialogues, {} utterances",
        corpus.dialogues.len(),
        corpus.num_utterances()
    );
    print!("{}", compute_stats(&corpus.dialogues)?.to_table());

    let first = &corpus.dialogues[0];
    println!("\n{} ({:?}):", first.id, first.split);
    for u in first.utterances.iter().take(4) {
        println!(
            "  {:>2} {:<10} {:<8} {}",
            u.index, u.speaker.display_name, u.label.class_name, u.text
        );
    }
    Ok(())
}
