use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::OOD_LABEL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: usize,
    pub predicted: usize,
}

impl ClassScore {
    /// Classes with neither gold nor predicted items are left out of the
    /// macro averages.
    pub fn is_present(&self) -> bool {
        self.support > 0 || self.predicted > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Mean F1 over known classes and the out-of-domain class.
    pub macro_f1: f64,
    pub f1_ood: f64,
    /// Mean F1 over known classes only.
    pub f1_ind: f64,
    /// Known classes in the given order, then the out-of-domain class.
    pub per_class: Vec<ClassScore>,
}

/// Accuracy and per-class / macro F1 over the known labels plus
/// [`OOD_LABEL`]. Precision, recall and F1 default to 0 on zero division.
pub fn confusion_and_f1<S: AsRef<str>>(
    predictions: &[S],
    gold: &[S],
    known_labels: &[String],
) -> Result<ClassificationMetrics, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut index: HashMap<&str, usize> = known_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let ood = known_labels.len();
    index.insert(OOD_LABEL, ood);
    let lookup = |l: &str| index.get(l).copied().ok_or_else(|| EvalError::UnknownLabel(l.to_string()));

    let n = ood + 1;
    let mut tp = vec![0usize; n];
    let mut predicted = vec![0usize; n];
    let mut support = vec![0usize; n];
    let mut correct = 0usize;
    for (p, g) in predictions.iter().zip(gold) {
        let (pi, gi) = (lookup(p.as_ref())?, lookup(g.as_ref())?);
        predicted[pi] += 1;
        support[gi] += 1;
        if pi == gi {
            tp[pi] += 1;
            correct += 1;
        }
    }

    let per_class: Vec<ClassScore> = (0..n)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScore {
                label: if c == ood { OOD_LABEL.to_string() } else { known_labels[c].clone() },
                precision,
                recall,
                f1,
                support: support[c],
                predicted: predicted[c],
            }
        })
        .collect();

    let macro_f1 = mean_present(per_class.iter());
    let f1_ind = mean_present(per_class[..ood].iter());
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1,
        f1_ood: per_class[ood].f1,
        f1_ind,
        per_class,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean_present<'a>(scores: impl Iterator<Item = &'a ClassScore>) -> f64 {
    let (sum, count) = scores
        .filter(|s| s.is_present())
        .fold((0.0, 0usize), |(s, c), x| (s + x.f1, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn perfect_predictions() {
        let gold = ["a", "b", OOD_LABEL, "a"];
        let m = confusion_and_f1(&gold, &gold, &known()).unwrap();
        assert_eq!((m.accuracy, m.macro_f1, m.f1_ood, m.f1_ind), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn everything_rejected() {
        let gold = ["a", "b", OOD_LABEL];
        let pred = [OOD_LABEL; 3];
        let m = confusion_and_f1(&pred, &gold, &known()).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.f1_ood - 0.5).abs() < 1e-15);
        assert_eq!(m.f1_ind, 0.0);
        assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_excluded_from_macro() {
        let gold = ["a", "a"];
        let m = confusion_and_f1(&gold, &gold, &known()).unwrap();
        assert_eq!(m.f1_ind, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!(!m.per_class[1].is_present());
    }

    #[test]
    fn errors() {
        assert!(matches!(confusion_and_f1(&["a"], &["a", "b"], &known()), Err(EvalError::LengthMismatch { .. })));
        let empty: [&str; 0] = [];
        assert!(matches!(confusion_and_f1(&empty, &empty, &known()), Err(EvalError::EmptyInput)));
        assert!(matches!(confusion_and_f1(&["z"], &["a"], &known()), Err(EvalError::UnknownLabel(_))));
    }
}
