//! Test-only oracles, independent of the library code paths they check.
#![allow(dead_code)]

use oodbound::data::OOD_LABEL;

/// Metrics computed from an explicit confusion matrix.
pub struct OracleMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_ood: f64,
    pub f1_ind: f64,
    pub per_class: Vec<f64>,
}

/// Builds the full confusion matrix by brute-force counting and derives
/// every metric from it, with classes `known ++ [OOD]`.
pub fn confusion_oracle(pred: &[String], gold: &[String], known: &[String]) -> OracleMetrics {
    let mut classes: Vec<String> = known.to_vec();
    classes.push(OOD_LABEL.to_string());
    let n = classes.len();
    let pos = |l: &String| classes.iter().position(|c| c == l).unwrap();
    let mut cm = vec![vec![0u64; n]; n]; // cm[gold][pred]
    for (p, g) in pred.iter().zip(gold) {
        cm[pos(g)][pos(p)] += 1;
    }
    let total: u64 = cm.iter().flatten().sum();
    let diag: u64 = (0..n).map(|i| cm[i][i]).sum();
    let mut f1 = vec![0.0; n];
    let mut present = vec![false; n];
    for c in 0..n {
        let tp = cm[c][c] as f64;
        let col: u64 = (0..n).map(|g| cm[g][c]).sum();
        let row: u64 = cm[c].iter().sum();
        present[c] = col + row > 0;
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        f1[c] = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    let avg = |range: std::ops::Range<usize>| {
        let v: Vec<f64> = range.filter(|&c| present[c]).map(|c| f1[c]).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    OracleMetrics {
        accuracy: diag as f64 / total as f64,
        macro_f1: avg(0..n),
        f1_ood: f1[n - 1],
        f1_ind: avg(0..n - 1),
        per_class: f1,
    }
}

/// Sum taken in reverse iteration order.
pub fn reversed_mean(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut acc = vec![0.0; dim];
    for p in points.iter().rev() {
        for j in (0..dim).rev() {
            acc[j] += p[j];
        }
    }
    acc.iter().map(|s| s / points.len() as f64).collect()
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Random orthogonal matrix via Gram-Schmidt on the given square rows.
pub fn orthonormalize(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for i in 0..rows.len() {
        for j in 0..i {
            let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let rj = rows[j].clone();
            for (x, y) in rows[i].iter_mut().zip(rj) {
                *x -= d * y;
            }
        }
        rows[i] = normalize(&rows[i]);
    }
    rows
}
