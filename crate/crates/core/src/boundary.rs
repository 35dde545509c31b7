//! Per-class centroids and adaptive decision radii.
//!
//! For class `i` the training examples of class `i` are the in-domain set and
//! the examples of every other known class stand in for out-of-domain data.
//! With `d` the normalized Euclidean distance to the class centroid `c_i`,
//!
//! ```text
//! F(r) = Σ_{x∈OOD} (d(x, c_i) − r) / n_OOD  +  β_i · Σ_{x∈IND} (d(x, c_i) − r) / n_i
//! β_i  = n_OOD / n_i
//! ```
//!
//! The radius search walks `r = 0, Δr, 2Δr, …` and stops at the first grid
//! point where `max(F, 0)` reaches its minimum, i.e. where `F ≤ 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util;

/// Upper end of the normalized Euclidean distance range.
pub const MAX_DISTANCE: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum BoundaryError {
    #[error("zero-norm vector (degenerate projection)")]
    ZeroNorm,
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("class {0} has no examples")]
    EmptyClass(usize),
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },
    #[error("distance list is empty; the class cannot be fitted")]
    EmptyDistances,
    #[error("class counts must be positive (got {n_i} and {n_rest})")]
    ZeroCount { n_i: usize, n_rest: usize },
    #[error("radius fitting needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("invalid boundary parameters: {0}")]
    InvalidParams(String),
}

/// Centroid, size and decision radius of one known class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub label: String,
    pub centroid: Vec<f64>,
    pub count: usize,
    pub radius: f64,
}

/// Radius search schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub step: f64,
    pub max_iter: usize,
    /// Replaces the per-class imbalance weight when set.
    pub beta_override: Option<f64>,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            step: 0.001,
            max_iter: 2000,
            beta_override: None,
        }
    }
}

impl BoundaryParams {
    pub fn validate(&self) -> Result<(), BoundaryError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(BoundaryError::InvalidParams(format!("step must be positive, got {}", self.step)));
        }
        if self.max_iter == 0 {
            return Err(BoundaryError::InvalidParams("max_iter must be at least 1".into()));
        }
        if let Some(b) = self.beta_override {
            if !(b > 0.0 && b.is_finite()) {
                return Err(BoundaryError::InvalidParams(format!("beta must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one radius search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    pub radius: f64,
    /// Grid index of the returned radius.
    pub iterations: usize,
    /// False when the iteration limit was hit before `F ≤ 0`.
    pub converged: bool,
    pub beta: f64,
    pub mean_ind: f64,
    pub mean_ood: f64,
}

/// Mean of each class's vectors, in class-index order. Radii are left at 0.
pub fn compute_centroids(
    projected: &[(Vec<f64>, usize)],
    labels: &[String],
) -> Result<Vec<ClassGeometry>, BoundaryError> {
    let k = labels.len();
    let dim = projected.first().map_or(0, |(v, _)| v.len());
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, c) in projected {
        if *c >= k {
            return Err(BoundaryError::ClassIndex { index: *c, classes: k });
        }
        if v.len() != dim {
            return Err(BoundaryError::DimensionMismatch(dim, v.len()));
        }
        for (s, x) in sums[*c].iter_mut().zip(v) {
            *s += x;
        }
        counts[*c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(BoundaryError::EmptyClass(empty));
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .zip(labels)
        .map(|((sum, n), label)| ClassGeometry {
            label: label.clone(),
            centroid: sum.into_iter().map(|s| s / n as f64).collect(),
            count: n,
            radius: 0.0,
        })
        .collect())
}

/// `‖x/‖x‖ − y/‖y‖‖`, in `[0, 2]`.
pub fn norm_euclid(x: &[f64], y: &[f64]) -> Result<f64, BoundaryError> {
    if x.len() != y.len() {
        return Err(BoundaryError::DimensionMismatch(x.len(), y.len()));
    }
    let (ux, _) = util::unit(x).ok_or(BoundaryError::ZeroNorm)?;
    let (uy, _) = util::unit(y).ok_or(BoundaryError::ZeroNorm)?;
    Ok(util::euclid(&ux, &uy))
}

/// Imbalance weight `n_rest / n_i`.
pub fn beta(n_i: usize, n_rest: usize) -> Result<f64, BoundaryError> {
    if n_i == 0 || n_rest == 0 {
        return Err(BoundaryError::ZeroCount { n_i, n_rest });
    }
    Ok(n_rest as f64 / n_i as f64)
}

/// Stopping criterion reduced to its sufficient statistics, so each grid
/// evaluation costs O(1).
#[derive(Clone, Copy, Debug)]
pub struct Criterion {
    sum_ind: f64,
    n_ind: f64,
    sum_ood: f64,
    n_ood: f64,
    beta: f64,
}

impl Criterion {
    pub fn new(dists_ind: &[f64], dists_ood: &[f64], beta: f64) -> Result<Self, BoundaryError> {
        if dists_ind.is_empty() || dists_ood.is_empty() {
            return Err(BoundaryError::EmptyDistances);
        }
        Ok(Criterion {
            sum_ind: dists_ind.iter().sum(),
            n_ind: dists_ind.len() as f64,
            sum_ood: dists_ood.iter().sum(),
            n_ood: dists_ood.len() as f64,
            beta,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.sum_ood - self.n_ood * r) / self.n_ood + self.beta * (self.sum_ind - self.n_ind * r) / self.n_ind
    }

    pub fn mean_ind(&self) -> f64 {
        self.sum_ind / self.n_ind
    }

    pub fn mean_ood(&self) -> f64 {
        self.sum_ood / self.n_ood
    }
}

/// `F(r)` for precomputed distances to the class centroid.
pub fn criterion_f(dists_ind: &[f64], dists_ood: &[f64], r: f64, beta: f64) -> Result<f64, BoundaryError> {
    Ok(Criterion::new(dists_ind, dists_ood, beta)?.eval(r))
}

/// Exact root of `F`, which is linear in `r`: `(A + βB) / (1 + β)` with `A`
/// the mean out-of-domain and `B` the mean in-domain distance.
pub fn closed_form_radius(mean_ood: f64, mean_ind: f64, beta: f64) -> f64 {
    (mean_ood + beta * mean_ind) / (1.0 + beta)
}

/// Walks the radius grid until `F ≤ 0` or the iteration limit is reached.
pub fn search_radius(criterion: &Criterion, params: &BoundaryParams) -> RadiusFit {
    let mut fit = RadiusFit {
        radius: 0.0,
        iterations: 0,
        converged: false,
        beta: criterion.beta,
        mean_ind: criterion.mean_ind(),
        mean_ood: criterion.mean_ood(),
    };
    for it in 0..=params.max_iter {
        let r = (it as f64 * params.step).min(MAX_DISTANCE);
        fit.radius = r;
        fit.iterations = it;
        if criterion.eval(r) <= 0.0 {
            fit.converged = true;
            break;
        }
        if r >= MAX_DISTANCE {
            break;
        }
    }
    fit
}

/// Fits the radius of class `class_index` against the other known classes.
pub fn fit_radius(
    class_index: usize,
    geometry: &[ClassGeometry],
    projected: &[(Vec<f64>, usize)],
    params: &BoundaryParams,
) -> Result<RadiusFit, BoundaryError> {
    params.validate()?;
    let units = unit_rows(projected)?;
    let centroids = unit_centroids(geometry)?;
    fit_one(class_index, &centroids, &units, params)
}

fn unit_rows(projected: &[(Vec<f64>, usize)]) -> Result<Vec<(Vec<f64>, usize)>, BoundaryError> {
    projected
        .iter()
        .map(|(v, c)| util::unit(v).map(|(u, _)| (u, *c)).ok_or(BoundaryError::ZeroNorm))
        .collect()
}

pub(crate) fn unit_centroids(geometry: &[ClassGeometry]) -> Result<Vec<Vec<f64>>, BoundaryError> {
    geometry
        .iter()
        .map(|g| util::unit(&g.centroid).map(|(u, _)| u).ok_or(BoundaryError::ZeroNorm))
        .collect()
}

fn fit_one(
    class_index: usize,
    centroids: &[Vec<f64>],
    units: &[(Vec<f64>, usize)],
    params: &BoundaryParams,
) -> Result<RadiusFit, BoundaryError> {
    let k = centroids.len();
    if k < 2 {
        return Err(BoundaryError::TooFewClasses(k));
    }
    if class_index >= k {
        return Err(BoundaryError::ClassIndex { index: class_index, classes: k });
    }
    let c = &centroids[class_index];
    let mut ind = Vec::new();
    let mut ood = Vec::new();
    for (u, label) in units {
        if u.len() != c.len() {
            return Err(BoundaryError::DimensionMismatch(c.len(), u.len()));
        }
        let d = util::euclid(u, c);
        if *label == class_index {
            ind.push(d);
        } else {
            ood.push(d);
        }
    }
    if ind.is_empty() {
        return Err(BoundaryError::EmptyClass(class_index));
    }
    if ood.is_empty() {
        return Err(BoundaryError::EmptyDistances);
    }
    let b = match params.beta_override {
        Some(b) => b,
        None => beta(ind.len(), ood.len())?,
    };
    Ok(search_radius(&Criterion::new(&ind, &ood, b)?, params))
}

/// Computes centroids and fits every class radius. Classes are fitted in
/// parallel; results keep class-index order.
pub fn fit_boundaries(
    projected: &[(Vec<f64>, usize)],
    labels: &[String],
    params: &BoundaryParams,
) -> Result<(Vec<ClassGeometry>, Vec<RadiusFit>), BoundaryError> {
    params.validate()?;
    if labels.len() < 2 {
        return Err(BoundaryError::TooFewClasses(labels.len()));
    }
    let mut geometry = compute_centroids(projected, labels)?;
    let units = unit_rows(projected)?;
    let centroids = unit_centroids(&geometry)?;
    let fits = (0..labels.len())
        .into_par_iter()
        .map(|i| fit_one(i, &centroids, &units, params))
        .collect::<Result<Vec<_>, _>>()?;
    for (g, f) in geometry.iter_mut().zip(&fits) {
        g.radius = f.radius;
        if !f.converged {
            log::warn!(
                "radius search for class `{}` stopped at the iteration limit (r = {})",
                g.label,
                f.radius
            );
        }
    }
    Ok((geometry, fits))
}
