//! Packs one utterance with its surrounding dialogue under each context mode
//! and a tight token budget.

use erc::corpus::{Dialogue, EmotionLabel, Speaker, Split, Utterance};
use erc::seqbuilder::{build, BuildConfig, ContextMode, SpanKind};
use erc::tokenizer::Vocab;

fn utterance(index: usize, speaker: &str, text: &str, emotion: &str) -> Utterance {
    Utterance {
        dialogue_id: "central_perk".into(),
        index,
        speaker: Speaker::named(speaker),
        text: text.into(),
        label: EmotionLabel {
            class_index: 0,
            class_name: emotion.into(),
        },
    }
}

fn main() -> erc::Result<()> {
    let dialogue = Dialogue {
        id: "central_perk".into(),
        split: Split::Test,
        utterances: vec![
            utterance(
                1,
                "Monica",
                "There's nothing to tell! He's just some guy I work with!",
                "neutral",
            ),
            utterance(2, "Joey", "C'mon, you're going out with the guy!", "joy"),
            utterance(3, "Chandler", "All right Joey, be nice.", "neutral"),
            utterance(4, "Phoebe", "Wait, does he eat chalk?", "surprise"),
            utterance(
                5,
                "Monica",
                "Just, 'cause, I don't want her to go through what I went through.",
                "sadness",
            ),
        ],
    };
    let vocab = Vocab::train(std::slice::from_ref(&dialogue), 400)?;

    for mode in ContextMode::ALL {
        for budget in [512, 40] {
            let cfg = BuildConfig {
                mode,
                max_total_tokens: budget,
                ..Default::default()
            };
            let seq = build(&dialogue, 3, &cfg, &vocab)?;
            println!(
                "{:<26} budget {budget:>3}: {:>2} tokens, utterances {:?}",
                mode.describe(),
                seq.len(),
                seq.included_utterances()
            );
        }
    }

    let seq = build(&dialogue, 3, &BuildConfig::default(), &vocab)?;
    println!("\n{}", vocab.decode(&seq.ids)?);
    for span in seq.spans.iter().filter(|s| s.kind == SpanKind::SpeakerName) {
        println!(
            "  name tokens {}..{}: {:?}",
            span.start,
            span.end,
            vocab.decode(&seq.ids[span.start..span.end])?
        );
    }

    let plain = BuildConfig {
        prepend_speaker: false,
        ..Default::default()
    };
    println!(
        "\nwithout names: {}",
        vocab.decode(&build(&dialogue, 3, &plain, &vocab)?.ids)?
    );
    Ok(())
}
