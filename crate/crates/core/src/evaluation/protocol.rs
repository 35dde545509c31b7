use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confusion_and_f1, EvalError, REPORT_SCHEMA};
use crate::boundary::BoundaryParams;
use crate::data::{make_split, Dataset, LabeledEmbedding, SplitSpec};
use crate::detector;
use crate::metric::TrainConfig;
use crate::util::keyed_rng;
use crate::Error;

/// How native out-of-domain test rows are combined with rows of held-out
/// classes. Recorded in every report.
pub const OOD_HANDLING: &str = "native out-of-domain test rows are merged with relabelled unknown-class test rows";

const SUBSAMPLE_STREAM: u64 = 0x5ab5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ratios: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ratios: vec![0.25, 0.5, 0.75],
            runs: 10,
            seed: 0,
            train_fraction: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.runs == 0 {
            return Err(EvalError::InvalidConfig("runs must be at least 1".into()));
        }
        if self.ratios.is_empty() {
            return Err(EvalError::InvalidConfig("at least one known ratio is required".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(EvalError::InvalidConfig(format!("known ratio {r} outside (0, 1]")));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "train fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// The four headline metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_ood: f64,
    pub f1_ind: f64,
}

impl MetricSummary {
    pub const NAMES: [&'static str; 4] = ["accuracy", "macro_f1", "f1_ood", "f1_ind"];

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.macro_f1, self.f1_ood, self.f1_ind]
    }

    fn from_values(v: [f64; 4]) -> Self {
        MetricSummary {
            accuracy: v[0],
            macro_f1: v[1],
            f1_ood: v[2],
            f1_ind: v[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_index: usize,
    pub known_labels: Vec<String>,
    pub train_size: usize,
    pub test_ood: usize,
    pub metrics: MetricSummary,
    /// F1 of every class present in this run's test set or predictions.
    pub per_class_f1: BTreeMap<String, f64>,
    pub unconverged_radii: usize,
}

/// Results of every run at one known ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ratio: f64,
    pub runs: usize,
    pub per_run: Vec<RunMetrics>,
    pub mean: MetricSummary,
    /// Sample standard deviation; 0 for a single run.
    pub std: MetricSummary,
    /// Mean F1 of each class over the runs in which it appears.
    pub per_class_f1: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub schema: String,
    pub ood_handling: String,
    pub run_config: RunConfig,
    pub train_config: TrainConfig,
    pub boundary_params: BoundaryParams,
    pub results: Vec<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub train_fraction: f64,
    pub report: ProtocolReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub entries: Vec<SweepEntry>,
}

/// Sample mean and standard deviation (n − 1 denominator; 0 when n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Training seed of run `run`, shared by every ratio and train fraction.
pub fn run_train_seed(seed: u64, run: usize) -> u64 {
    splitmix64(seed.wrapping_add(run as u64))
}

/// Keeps `max(1, round(fraction · n_c))` rows of every class, chosen at
/// random, in their original order.
pub fn stratified_subsample(train: &Dataset, fraction: f64, seed: u64, run: usize) -> Result<Dataset, Error> {
    if fraction >= 1.0 {
        return Ok(train.clone());
    }
    let mut rng = keyed_rng(seed ^ SUBSAMPLE_STREAM, run as u64);
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, it) in train.items().iter().enumerate() {
        by_class.entry(it.label.as_str()).or_default().push(i);
    }
    let mut keep = Vec::new();
    for members in by_class.values() {
        let n = members.len();
        let k = ((fraction * n as f64).round() as usize).clamp(1, n);
        keep.extend(index::sample(&mut rng, n, k).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    let items: Vec<LabeledEmbedding> = keep.into_iter().map(|i| train.items()[i].clone()).collect();
    Ok(Dataset::new(items)?)
}

fn run_cell(
    train: &Dataset,
    test: &Dataset,
    ratio: f64,
    run: usize,
    run_config: &RunConfig,
    train_config: &TrainConfig,
    boundary_params: &BoundaryParams,
) -> Result<RunMetrics, Error> {
    let split = make_split(
        train,
        test,
        &SplitSpec {
            known_ratio: ratio,
            seed: run_config.seed,
            run_index: run as u64,
        },
    )?;
    let sub = stratified_subsample(&split.train, run_config.train_fraction, run_config.seed, run)?;
    let config = TrainConfig {
        seed: run_train_seed(run_config.seed, run),
        ..train_config.clone()
    };
    let model = detector::fit(&sub, &config, boundary_params)?;
    let xs: Vec<&[f64]> = split.test.items().iter().map(|it| it.vector.as_slice()).collect();
    let predictions = model.predict_batch(&xs)?;
    let predicted: Vec<&str> = predictions.iter().map(|p| p.label.as_str()).collect();
    let gold: Vec<&str> = split.test.items().iter().map(|it| it.label.as_str()).collect();
    let m = confusion_and_f1(&predicted, &gold, &split.known_labels)?;
    Ok(RunMetrics {
        run_index: run,
        train_size: sub.len(),
        test_ood: split.test.ood_count(),
        known_labels: split.known_labels,
        metrics: MetricSummary {
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            f1_ood: m.f1_ood,
            f1_ind: m.f1_ind,
        },
        per_class_f1: m
            .per_class
            .iter()
            .filter(|c| c.is_present())
            .map(|c| (c.label.clone(), c.f1))
            .collect(),
        unconverged_radii: model.metadata().radius_fits.iter().filter(|f| !f.converged).count(),
    })
}

fn aggregate(ratio: f64, per_run: Vec<RunMetrics>) -> MetricsReport {
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for m in 0..4 {
        let vals: Vec<f64> = per_run.iter().map(|r| r.metrics.values()[m]).collect();
        (mean[m], std[m]) = mean_std(&vals);
    }
    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &per_run {
        for (l, f) in &r.per_class_f1 {
            per_class.entry(l.clone()).or_default().push(*f);
        }
    }
    MetricsReport {
        ratio,
        runs: per_run.len(),
        per_run,
        mean: MetricSummary::from_values(mean),
        std: MetricSummary::from_values(std),
        per_class_f1: per_class.into_iter().map(|(l, v)| (l, mean_std(&v).0)).collect(),
    }
}

/// Runs every (ratio, run) cell: split, optional subsampling, fit, predict
/// and score. Cells run in parallel on the current rayon pool; results are
/// assembled in (ratio, run) order, so the report does not depend on the
/// thread count. Any failing cell fails the whole report.
pub fn run_protocol(
    train: &Dataset,
    test: &Dataset,
    run_config: &RunConfig,
    train_config: &TrainConfig,
    boundary_params: &BoundaryParams,
) -> Result<ProtocolReport, Error> {
    run_config.validate()?;
    train_config.validate()?;
    boundary_params.validate()?;
    let cells: Vec<(usize, usize)> = (0..run_config.ratios.len())
        .flat_map(|r| (0..run_config.runs).map(move |run| (r, run)))
        .collect();
    let outcomes = cells
        .par_iter()
        .map(|&(r, run)| {
            let ratio = run_config.ratios[r];
            run_cell(train, test, ratio, run, run_config, train_config, boundary_params)
                .map_err(|e| EvalError::Cell { ratio, run, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut outcomes = outcomes.into_iter();
    let results = run_config
        .ratios
        .iter()
        .map(|&ratio| aggregate(ratio, outcomes.by_ref().take(run_config.runs).collect()))
        .collect();
    Ok(ProtocolReport {
        schema: REPORT_SCHEMA.to_string(),
        ood_handling: OOD_HANDLING.to_string(),
        run_config: run_config.clone(),
        train_config: train_config.clone(),
        boundary_params: boundary_params.clone(),
        results,
    })
}

/// Repeats [`run_protocol`] at each training fraction with the same seeds.
pub fn train_size_sweep(
    fractions: &[f64],
    train: &Dataset,
    test: &Dataset,
    run_config: &RunConfig,
    train_config: &TrainConfig,
    boundary_params: &BoundaryParams,
) -> Result<SweepReport, Error> {
    if fractions.is_empty() {
        return Err(EvalError::InvalidConfig("no training fractions given".into()).into());
    }
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) || fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidConfig(format!(
            "training fractions must be strictly ascending in (0, 1], got {fractions:?}"
        ))
        .into());
    }
    let entries = fractions
        .iter()
        .map(|&f| {
            let rc = RunConfig {
                train_fraction: f,
                ..run_config.clone()
            };
            run_protocol(train, test, &rc, train_config, boundary_params).map(|report| SweepEntry {
                train_fraction: f,
                report,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SweepReport {
        schema: REPORT_SCHEMA.to_string(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, BlobSpec};

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn subsample_is_stratified_with_floor() {
        let (train, _) = synth_blobs(&BlobSpec { classes: 3, dim: 4, per_class: 10, sigma: 0.1, seed: 3 }).unwrap();
        let sub = stratified_subsample(&train, 0.3, 7, 0).unwrap();
        assert_eq!(sub.class_counts(), vec![3, 3, 3]);
        let tiny = stratified_subsample(&train, 0.01, 7, 0).unwrap();
        assert_eq!(tiny.class_counts(), vec![1, 1, 1]);
        assert_eq!(stratified_subsample(&train, 0.3, 7, 0).unwrap(), sub);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { runs: 0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { ratios: vec![0.0], ..Default::default() }.validate().is_err());
        assert!(RunConfig { train_fraction: 1.5, ..Default::default() }.validate().is_err());
    }
}
