use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
}

/// `confusion[label][prediction]` counts.
pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class index {} out of range for {num_classes} classes",
                p.max(y)
            )));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

/// Accuracy, macro F1 over all `num_classes` classes (a class that appears in
/// neither labels nor predictions scores 0) and Cohen's kappa.
pub fn evaluate(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Metrics> {
    let m = confusion_matrix(predictions, labels, num_classes)?;
    let n = labels.len() as f64;
    let correct: u64 = (0..num_classes).map(|c| m[c][c]).sum();
    let accuracy = correct as f64 / n;

    let mut f1_sum = 0.0;
    let mut p_e = 0.0;
    for c in 0..num_classes {
        let tp = m[c][c] as f64;
        let row: u64 = m[c].iter().sum();
        let col: u64 = m.iter().map(|r| r[c]).sum();
        let precision = if col > 0 { tp / col as f64 } else { 0.0 };
        let recall = if row > 0 { tp / row as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
        p_e += (row as f64 / n) * (col as f64 / n);
    }
    let macro_f1 = f1_sum / num_classes as f64;
    // Chance agreement of 1 means a single class everywhere, which is
    // necessarily perfect agreement.
    let kappa = if p_e >= 1.0 {
        1.0
    } else {
        (accuracy - p_e) / (1.0 - p_e)
    };
    Ok(Metrics {
        accuracy,
        macro_f1,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let y = [0, 1, 2, 1, 0];
        let m = evaluate(&y, &y, 3).unwrap();
        assert_eq!((m.accuracy, m.macro_f1, m.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn chance_level_agreement() {
        let m = evaluate(&[0, 1, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.kappa, 0.0);
    }

    #[test]
    fn constant_predictions() {
        let m = evaluate(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.kappa, 0.0);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let m = evaluate(&[0, 1], &[0, 1], 3).unwrap();
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn total_disagreement_is_negative() {
        let m = evaluate(&[1, 0, 1, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.kappa, -1.0);
        assert_eq!(m.macro_f1, 0.0);
    }

    #[test]
    fn errors() {
        assert!(evaluate(&[], &[], 2).is_err());
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
        assert!(evaluate(&[2], &[0], 2).is_err());
    }
}
