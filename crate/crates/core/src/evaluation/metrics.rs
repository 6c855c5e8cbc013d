use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion matrix and per-class scores. Rows of `confusion` are gold
/// classes, columns are predictions. Zero denominators give a score of 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

fn check_inputs(predictions: &[usize], gold: &[usize]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    if predictions.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    Ok(())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_predictions(
        predictions: &[usize],
        gold: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self> {
        check_inputs(predictions, gold)?;
        let c = class_names.len();
        if let Some(bad) = predictions.iter().chain(gold).find(|&&k| k >= c) {
            return Err(Error::InvalidArgument(format!(
                "class {bad} out of range for {c} classes"
            )));
        }
        let mut confusion = vec![vec![0u64; c]; c];
        for (&p, &g) in predictions.iter().zip(gold) {
            confusion[g][p] += 1;
        }
        let n = predictions.len() as f64;
        let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
        let predicted: Vec<u64> = (0..c)
            .map(|k| confusion.iter().map(|row| row[k]).sum())
            .collect();
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        let mut f1 = Vec::with_capacity(c);
        for k in 0..c {
            let tp = confusion[k][k];
            let p = ratio(tp, predicted[k]);
            let r = ratio(tp, support[k]);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            });
        }
        let weighted_f1 = f1
            .iter()
            .zip(&support)
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / n;
        let accuracy = (0..c).map(|k| confusion[k][k]).sum::<u64>() as f64 / n;
        Ok(EvalReport {
            class_names,
            confusion,
            precision,
            recall,
            f1,
            support,
            accuracy,
            weighted_f1,
        })
    }

    pub fn n_examples(&self) -> u64 {
        self.support.iter().sum()
    }
}

/// Support-weighted mean of per-class f1.
pub fn weighted_f1(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    check_inputs(predictions, gold)?;
    let c = predictions.iter().chain(gold).max().map_or(0, |m| m + 1);
    let names = (0..c).map(|k| k.to_string()).collect();
    Ok(EvalReport::from_predictions(predictions, gold, names)?.weighted_f1)
}

/// Formats a fraction as a percentage with two decimals.
pub fn percent(score: f64) -> String {
    format!("{:.2}", 100.0 * score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_case() {
        // gold [A,A,B], pred [A,B,B]: A has P=1 R=1/2, B has P=1/2 R=1
        let f = weighted_f1(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn extremes() {
        assert_eq!(weighted_f1(&[2, 0, 1], &[2, 0, 1]).unwrap(), 1.0);
        assert_eq!(weighted_f1(&[1, 1, 1], &[0, 0, 0]).unwrap(), 0.0);
        assert!(weighted_f1(&[], &[]).is_err());
        assert!(weighted_f1(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn marginals_match_counts() {
        let pred = [0, 2, 2, 1, 0, 0];
        let gold = [0, 2, 1, 1, 2, 0];
        let r =
            EvalReport::from_predictions(&pred, &gold, vec!["a".into(), "b".into(), "c".into()])
                .unwrap();
        assert_eq!(r.support, vec![2, 2, 2]);
        assert_eq!(r.n_examples(), 6);
        let col0: u64 = r.confusion.iter().map(|row| row[0]).sum();
        assert_eq!(col0, 3);
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_contributes_nothing() {
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        let r = EvalReport::from_predictions(&[0, 1], &[0, 1], names).unwrap();
        assert_eq!(r.f1[3], 0.0);
        assert_eq!(r.weighted_f1, 1.0);
    }

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.65614), "65.61");
        assert_eq!(percent(1.0), "100.00");
    }
}
