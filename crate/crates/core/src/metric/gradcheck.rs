//! Central finite-difference verification of the analytic loss gradients.
//!
//! Each trial draws a small random instance (input dimension ≤ 8, ≤ 4
//! classes, ≤ 8 items), perturbs every parameter by `±step` and compares
//! `(L(θ+h) − L(θ−h)) / 2h` with the analytic gradient.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{lmcl_loss, triplet_loss, LmclHead, MetricError, Projection, Triplet};
use crate::util::keyed_rng;

/// Gradients below this magnitude are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Negative control: perturbs the analytic gradients before comparison,
    /// which must make the check fail.
    pub corrupt_analytic: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 20,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-5,
            corrupt_analytic: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub parameters_checked: usize,
    pub worst_lmcl: f64,
    pub worst_triplet: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.worst_lmcl.max(self.worst_triplet)
    }

    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

struct Instance {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    proj: Projection,
    head: LmclHead,
    triplet_margin: f64,
}

impl Instance {
    fn batch(&self) -> Vec<(&[f64], usize)> {
        self.inputs.iter().map(Vec::as_slice).zip(self.labels.iter().copied()).collect()
    }
}

fn random_instance(rng: &mut ChaCha8Rng, paired: bool) -> Result<Instance, MetricError> {
    let d_in = rng.random_range(2..=8);
    let d_out = rng.random_range(2..=8);
    let k = rng.random_range(2..=4);
    let labels: Vec<usize> = if paired {
        (0..k).flat_map(|c| [c, c]).collect()
    } else {
        let n = rng.random_range(2..=8);
        (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect()
    };
    let inputs = labels
        .iter()
        .map(|_| (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let weights = (0..d_in * d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dirs = (0..k * d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = rng.random_range(1.0..64.0);
    let margin = rng.random_range(0.0..0.5);
    Ok(Instance {
        inputs,
        labels,
        proj: Projection::new(d_in, d_out, weights)?,
        head: LmclHead::new(k, d_out, dirs, scale, margin)?,
        triplet_margin: rng.random_range(0.2..1.5),
    })
}

fn check_lmcl(inst: &Instance, cfg: &GradcheckConfig) -> Result<(f64, usize), MetricError> {
    let batch = inst.batch();
    let out = lmcl_loss(&batch, &inst.proj, &inst.head)?;
    let mut analytic_proj = out.grad_proj;
    let mut analytic_head = out.grad_head;
    if cfg.corrupt_analytic {
        analytic_proj[0] += 1e-2;
        analytic_head[0] -= 1e-2;
    }
    let h = cfg.step;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic_proj.iter().enumerate() {
        let eval = |delta: f64| -> Result<f64, MetricError> {
            let mut p = inst.proj.clone();
            p.weights_mut()[i] += delta;
            Ok(lmcl_loss(&batch, &p, &inst.head)?.loss)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max(relative_error(*a, numeric));
    }
    for (i, a) in analytic_head.iter().enumerate() {
        let eval = |delta: f64| -> Result<f64, MetricError> {
            let mut hd = inst.head.clone();
            hd.directions_mut()[i] += delta;
            Ok(lmcl_loss(&batch, &inst.proj, &hd)?.loss)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok((worst, analytic_proj.len() + analytic_head.len()))
}

/// Returns `None` when a ±step perturbation changes the mined triplets or
/// the set of active hinges; the loss is not differentiable there.
fn check_triplet(inst: &Instance, cfg: &GradcheckConfig) -> Result<Option<(f64, usize)>, MetricError> {
    let batch = inst.batch();
    let m = inst.triplet_margin;
    let base = triplet_loss(&batch, &inst.proj, m)?;
    let mut analytic = base.grad_proj.clone();
    if cfg.corrupt_analytic {
        analytic[0] += 1e-2;
    }
    let active = |p: &Projection, t: &[Triplet]| -> Result<Vec<bool>, MetricError> {
        // recompute hinge activity for a fixed triplet set
        let units: Vec<Vec<f64>> = batch
            .iter()
            .map(|&(x, _)| {
                let z = p.apply_unchecked(x);
                crate::util::unit(&z).map(|u| u.0).ok_or(MetricError::ZeroNorm)
            })
            .collect::<Result<_, _>>()?;
        Ok(t.iter()
            .map(|t| {
                let d_ap = crate::util::euclid(&units[t.anchor], &units[t.positive]);
                let d_an = crate::util::euclid(&units[t.anchor], &units[t.negative]);
                d_ap - d_an + m > 0.0
            })
            .collect())
    };
    let base_active = active(&inst.proj, &base.triplets)?;
    let h = cfg.step;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut losses = [0.0; 2];
        for (slot, delta) in [h, -h].into_iter().enumerate() {
            let mut p = inst.proj.clone();
            p.weights_mut()[i] += delta;
            let out = triplet_loss(&batch, &p, m)?;
            if out.triplets != base.triplets || active(&p, &out.triplets)? != base_active {
                return Ok(None);
            }
            losses[slot] = out.loss;
        }
        let numeric = (losses[0] - losses[1]) / (2.0 * h);
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(Some((worst, analytic.len())))
}

/// Runs `cfg.trials` LMCL and triplet checks on seeded random instances.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport, MetricError> {
    let mut rng = keyed_rng(cfg.seed, 3);
    let mut worst_lmcl: f64 = 0.0;
    let mut worst_triplet: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..cfg.trials {
        let inst = random_instance(&mut rng, false)?;
        let (w, n) = check_lmcl(&inst, cfg)?;
        worst_lmcl = worst_lmcl.max(w);
        checked += n;
        loop {
            let inst = random_instance(&mut rng, true)?;
            if let Some((w, n)) = check_triplet(&inst, cfg)? {
                worst_triplet = worst_triplet.max(w);
                checked += n;
                break;
            }
        }
    }
    Ok(GradcheckReport {
        trials: cfg.trials,
        parameters_checked: checked,
        worst_lmcl,
        worst_triplet,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_central_differences() {
        let report = run_gradcheck(&GradcheckConfig { trials: 5, seed: 17, ..Default::default() }).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_gradients_are_caught() {
        let report = run_gradcheck(&GradcheckConfig {
            trials: 2,
            corrupt_analytic: true,
            ..Default::default()
        })
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 2.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }
}
