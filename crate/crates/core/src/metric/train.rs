use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_params, lmcl_loss, triplet_loss, MetricError, Projection};
use crate::data::Dataset;
use crate::util::keyed_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Lmcl,
    Triplet,
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lmcl" => Ok(LossKind::Lmcl),
            "triplet" => Ok(LossKind::Triplet),
            other => Err(format!("unknown loss `{other}` (expected lmcl or triplet)")),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Lmcl => "lmcl",
            LossKind::Triplet => "triplet",
        })
    }
}

/// Hyperparameters of projection training. Recorded verbatim in model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lmcl_scale: f64,
    pub lmcl_margin: f64,
    pub triplet_margin: f64,
    /// Output dimension of the projection; `None` keeps the input dimension.
    pub dim_out: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Lmcl,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            lmcl_scale: 64.0,
            lmcl_margin: 0.35,
            triplet_margin: 1.0,
            dim_out: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |msg: String| Err(MetricError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lmcl_scale > 0.0 && self.lmcl_scale.is_finite()) {
            return bad(format!("LMCL scale must be positive, got {}", self.lmcl_scale));
        }
        if !(self.lmcl_margin >= 0.0 && self.lmcl_margin.is_finite()) {
            return bad(format!("LMCL margin must be >= 0, got {}", self.lmcl_margin));
        }
        if !(self.triplet_margin > 0.0 && self.triplet_margin.is_finite()) {
            return bad(format!("triplet margin must be positive, got {}", self.triplet_margin));
        }
        if let Some(d) = self.dim_out {
            if d < 2 {
                return bad(format!("output dimension must be at least 2, got {d}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
    /// Triplet batches dropped because they held a single class.
    pub skipped_batches: usize,
}

/// Adam with bias correction.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Learns the projection by mini-batch Adam over shuffled epochs. The
/// result depends only on the dataset contents and `config`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(Projection, TrainReport), MetricError> {
    config.validate()?;
    if dataset.ood_count() > 0 {
        return Err(MetricError::InvalidData("training data contains out-of-domain rows".into()));
    }
    let k = dataset.labels().len();
    if k < 2 {
        return Err(MetricError::InvalidData(format!(
            "training needs at least 2 classes, got {k}"
        )));
    }
    let counts = dataset.class_counts();
    if config.loss == LossKind::Triplet && counts.iter().all(|&c| c < 2) {
        return Err(MetricError::InvalidData(
            "triplet training needs a class with at least 2 examples".into(),
        ));
    }

    let samples = dataset.indexed();
    let dim_in = dataset.dim();
    let dim_out = config.dim_out.unwrap_or(dim_in);
    let (mut proj, mut head) = init_params(
        dim_in,
        dim_out,
        k,
        config.seed,
        config.lmcl_scale,
        config.lmcl_margin,
    )?;
    let mut proj_opt = Adam::new(proj.weights().len(), config.learning_rate);
    let mut head_opt = Adam::new(head.directions().len(), config.learning_rate);
    let mut rng = keyed_rng(config.seed, 2);

    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut skipped = 0;
    for epoch in 0..config.epochs {
        let batches = match config.loss {
            LossKind::Lmcl => shuffled_batches(samples.len(), config.batch_size, &mut rng),
            LossKind::Triplet => stratified_batches(&samples, k, config.batch_size, &mut rng),
        };
        let mut epoch_loss = 0.0;
        let mut used = 0usize;
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<(&[f64], usize)> = idx.iter().map(|&i| samples[i]).collect();
            let loss = match config.loss {
                LossKind::Lmcl => {
                    let out = lmcl_loss(&batch, &proj, &head)?;
                    if !out.loss.is_finite() {
                        return Err(MetricError::NonFiniteLoss { epoch, batch: b });
                    }
                    proj_opt.step(proj.weights_mut(), &out.grad_proj);
                    head_opt.step(head.directions_mut(), &out.grad_head);
                    head.renormalize()?;
                    out.loss
                }
                LossKind::Triplet => {
                    let out = match triplet_loss(&batch, &proj, config.triplet_margin) {
                        Err(MetricError::SingleClassBatch) => {
                            log::debug!("epoch {epoch} batch {b}: single-class batch skipped");
                            skipped += 1;
                            continue;
                        }
                        r => r?,
                    };
                    if !out.loss.is_finite() {
                        return Err(MetricError::NonFiniteLoss { epoch, batch: b });
                    }
                    proj_opt.step(proj.weights_mut(), &out.grad_proj);
                    out.loss
                }
            };
            if proj.weights().iter().any(|w| !w.is_finite()) {
                return Err(MetricError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            used += 1;
        }
        if used == 0 {
            return Err(MetricError::InvalidData(format!(
                "epoch {epoch} produced no usable batch"
            )));
        }
        loss_curve.push(epoch_loss / used as f64);
    }
    if skipped > 0 {
        log::info!("skipped {skipped} single-class triplet batches");
    }
    let final_loss = *loss_curve.last().expect("epochs > 0");
    Ok((
        proj,
        TrainReport {
            epochs_run: loss_curve.len(),
            loss_curve,
            final_loss,
            skipped_batches: skipped,
        },
    ))
}

fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Shuffles each class, cuts it into same-class pairs, shuffles the pairs
/// and packs them into batches, so batches carry positives from several
/// classes.
fn stratified_batches(
    samples: &[(&[f64], usize)],
    classes: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &(_, c)) in samples.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut pairs: Vec<Vec<usize>> = Vec::new();
    for members in &mut by_class {
        members.shuffle(rng);
        pairs.extend(members.chunks(2).map(<[usize]>::to_vec));
    }
    pairs.shuffle(rng);
    let order: Vec<usize> = pairs.into_iter().flatten().collect();
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
