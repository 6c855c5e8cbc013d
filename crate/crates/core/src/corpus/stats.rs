use serde::{Deserialize, Serialize};

use super::{Dialogue, Split};
use crate::error::{Error, Result};

/// Per-split counts. `mean`/`std` are `None` for an empty split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: Split,
    pub dialogues: usize,
    pub utterances: usize,
    /// Mean utterances per dialogue.
    pub mean: Option<f64>,
    /// Population standard deviation of utterances per dialogue.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub splits: Vec<SplitStats>,
}

impl CorpusStats {
    pub fn get(&self, split: Split) -> &SplitStats {
        self.splits
            .iter()
            .find(|s| s.split == split)
            .expect("every split is always present")
    }

    /// Renders "dialogues (utterances)" and "mean (std)" rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("split | dialogues (utterances) | mean (std)\n");
        out.push_str("------|------------------------|-----------\n");
        for s in &self.splits {
            let ms = match (s.mean, s.std) {
                (Some(m), Some(sd)) => format!("{m:.2} ({sd:.2})"),
                _ => "undefined".to_string(),
            };
            out.push_str(&format!(
                "{} | {} ({}) | {}\n",
                s.split, s.dialogues, s.utterances, ms
            ));
        }
        out
    }
}

pub fn compute_stats(dialogues: &[Dialogue]) -> Result<CorpusStats> {
    if dialogues.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot compute stats of an empty corpus".into(),
        ));
    }
    let splits = Split::ALL
        .iter()
        .map(|&split| {
            let sizes: Vec<f64> = dialogues
                .iter()
                .filter(|d| d.split == split)
                .map(|d| d.len() as f64)
                .collect();
            let n = sizes.len();
            let utterances = sizes.iter().sum::<f64>() as usize;
            let (mean, std) = if n == 0 {
                (None, None)
            } else {
                let mean = sizes.iter().sum::<f64>() / n as f64;
                let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
                (Some(mean), Some(var.sqrt()))
            };
            SplitStats {
                split,
                dialogues: n,
                utterances,
                mean,
                std,
            }
        })
        .collect();
    Ok(CorpusStats { splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmotionLabel, Speaker, Utterance};

    fn dialogue(id: &str, m: usize, split: Split) -> Dialogue {
        Dialogue {
            id: id.into(),
            split,
            utterances: (1..=m)
                .map(|index| Utterance {
                    dialogue_id: id.into(),
                    index,
                    speaker: Speaker::named("A"),
                    text: String::new(),
                    label: EmotionLabel {
                        class_index: 0,
                        class_name: "neutral".into(),
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn single_dialogue_has_zero_std() {
        let s = compute_stats(&[dialogue("a", 5, Split::Train)]).unwrap();
        let train = s.get(Split::Train);
        assert_eq!(train.mean, Some(5.0));
        assert_eq!(train.std, Some(0.0));
        assert_eq!(s.get(Split::Val).dialogues, 0);
        assert_eq!(s.get(Split::Val).mean, None);
    }

    #[test]
    fn sizes_two_and_four() {
        let s =
            compute_stats(&[dialogue("a", 2, Split::Test), dialogue("b", 4, Split::Test)]).unwrap();
        let test = s.get(Split::Test);
        assert_eq!(test.mean, Some(3.0));
        // population std of {2, 4}: sqrt(((2-3)^2 + (4-3)^2) / 2) = 1
        assert_eq!(test.std, Some(1.0));
        assert_eq!(test.utterances, 6);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(compute_stats(&[]).is_err());
    }
}
