use serde::{Deserialize, Serialize};

use crate::corpus::StanceLabel;
use crate::{Error, Result};

/// Shared-task baselines (SVM over unigrams).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConstants {
    pub task_a: f64,
    pub task_b: f64,
}

pub const BASELINES: BaselineConstants = BaselineConstants { task_a: 0.578, task_b: 0.628 };

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class scores plus accuracy and f-avg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub against: ClassScores,
    pub favor: ClassScores,
    pub none: ClassScores,
    pub accuracy: f64,
    pub f_avg: f64,
}

impl Scores {
    pub fn class(&self, label: StanceLabel) -> &ClassScores {
        match label {
            StanceLabel::Against => &self.against,
            StanceLabel::Favor => &self.favor,
            StanceLabel::None => &self.none,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check(preds: &[StanceLabel], gold: &[StanceLabel]) -> Result<()> {
    if preds.len() != gold.len() {
        return Err(Error::DimensionMismatch { expected: gold.len(), actual: preds.len() });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    Ok(())
}

/// Precision, recall and F1 per class; any ratio with a zero denominator
/// is 0.
pub fn score(preds: &[StanceLabel], gold: &[StanceLabel]) -> Result<Scores> {
    check(preds, gold)?;
    let mut confusion = [[0usize; 3]; 3];
    for (p, g) in preds.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    let class = |k: usize| {
        let tp = confusion[k][k];
        let predicted: usize = (0..3).map(|g| confusion[g][k]).sum();
        let actual: usize = confusion[k].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ClassScores { precision, recall, f1, support: actual }
    };
    let (against, favor, none) = (class(0), class(1), class(2));
    let correct = (0..3).map(|k| confusion[k][k]).sum();
    Ok(Scores { accuracy: ratio(correct, gold.len()), f_avg: (against.f1 + favor.f1) / 2.0, against, favor, none })
}

/// Mean of the AGAINST and FAVOR F1 scores.
pub fn f_avg(preds: &[StanceLabel], gold: &[StanceLabel]) -> Result<f64> {
    score(preds, gold).map(|s| s.f_avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use StanceLabel::{Against as A, Favor as F, None as N};

    #[test]
    fn hand_example() {
        let s = score(&[A, F, F, F, N, A], &[A, A, F, F, N, N]).unwrap();
        assert!((s.against.f1 - 0.5).abs() < 1e-12);
        assert!((s.favor.f1 - 0.8).abs() < 1e-12);
        assert!((s.f_avg - 0.65).abs() < 1e-12);
        assert!((s.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn edge_cases() {
        let gold = [A, F, N, A];
        assert_eq!(f_avg(&gold, &gold).unwrap(), 1.0);
        assert_eq!(f_avg(&[N; 4], &gold).unwrap(), 0.0);
        assert!(f_avg(&[A], &[A, F]).is_err());
        assert!(f_avg(&[], &[]).is_err());
    }

    #[test]
    fn baselines() {
        assert_eq!(BASELINES.task_a, 0.578);
        assert_eq!(BASELINES.task_b, 0.628);
    }
}
