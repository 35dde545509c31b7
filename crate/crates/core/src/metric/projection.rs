use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::util::{self, keyed_rng};

/// Linear map `x ↦ W x` (no bias) with `W` stored row-major, `dim_out × dim_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    dim_in: usize,
    dim_out: usize,
    weights: Vec<f64>,
}

impl Projection {
    pub fn new(dim_in: usize, dim_out: usize, weights: Vec<f64>) -> Result<Self, MetricError> {
        if dim_in == 0 || dim_out < 2 {
            return Err(MetricError::InvalidShape(format!(
                "projection needs dim_in >= 1 and dim_out >= 2, got {dim_in} -> {dim_out}"
            )));
        }
        if weights.len() != dim_in * dim_out {
            return Err(MetricError::InvalidShape(format!(
                "{} weights for a {dim_out}x{dim_in} projection",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(MetricError::NonFiniteParameter);
        }
        Ok(Projection { dim_in, dim_out, weights })
    }

    pub fn identity(dim: usize) -> Result<Self, MetricError> {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Projection::new(dim, dim, w)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.dim_in..(i + 1) * self.dim_in]
    }

    /// Raw (unnormalized) projection `W x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        if x.len() != self.dim_in {
            return Err(MetricError::DimensionMismatch {
                expected: self.dim_in,
                found: x.len(),
            });
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim_in)
            .map(|row| util::dot(row, x))
            .collect()
    }
}

/// Class direction vectors and the scale/margin of the large-margin cosine
/// loss. Directions are stored row-major, `classes × dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmclHead {
    classes: usize,
    dim: usize,
    directions: Vec<f64>,
    pub scale: f64,
    pub margin: f64,
}

impl LmclHead {
    pub fn new(
        classes: usize,
        dim: usize,
        directions: Vec<f64>,
        scale: f64,
        margin: f64,
    ) -> Result<Self, MetricError> {
        if classes == 0 || dim == 0 || directions.len() != classes * dim {
            return Err(MetricError::InvalidShape(format!(
                "{} direction entries for {classes} classes of dimension {dim}",
                directions.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) || !(margin >= 0.0 && margin.is_finite()) {
            return Err(MetricError::InvalidConfig(format!(
                "LMCL needs scale > 0 and margin >= 0, got s={scale}, m={margin}"
            )));
        }
        if directions.iter().any(|w| !w.is_finite()) {
            return Err(MetricError::NonFiniteParameter);
        }
        Ok(LmclHead {
            classes,
            dim,
            directions,
            scale,
            margin,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub(crate) fn directions_mut(&mut self) -> &mut [f64] {
        &mut self.directions
    }

    pub fn direction(&self, j: usize) -> &[f64] {
        &self.directions[j * self.dim..(j + 1) * self.dim]
    }

    /// Rescales every direction to unit length.
    pub fn renormalize(&mut self) -> Result<(), MetricError> {
        for row in self.directions.chunks_exact_mut(self.dim) {
            let n = util::l2_norm(row);
            if !(n > 0.0 && n.is_finite()) {
                return Err(MetricError::ZeroNorm);
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(())
    }
}

/// Glorot-uniform projection weights in `[-a, a]`, `a = sqrt(6 / (dim_in +
/// dim_out))`, and unit-normalized class directions. Deterministic per seed.
pub fn init_params(
    dim_in: usize,
    dim_out: usize,
    classes: usize,
    seed: u64,
    scale: f64,
    margin: f64,
) -> Result<(Projection, LmclHead), MetricError> {
    if dim_in == 0 || dim_out == 0 || classes == 0 {
        return Err(MetricError::InvalidShape(format!(
            "dimensions and class count must be positive, got {dim_in}, {dim_out}, {classes}"
        )));
    }
    let mut rng = keyed_rng(seed, 1);
    let a = glorot_bound(dim_in, dim_out);
    let weights = (0..dim_in * dim_out).map(|_| rng.random_range(-a..=a)).collect();
    let projection = Projection::new(dim_in, dim_out, weights)?;

    let b = glorot_bound(dim_out, classes);
    let mut directions: Vec<f64> = Vec::with_capacity(classes * dim_out);
    for _ in 0..classes {
        loop {
            let row: Vec<f64> = (0..dim_out).map(|_| rng.random_range(-b..=b)).collect();
            if util::l2_norm(&row) > 1e-8 {
                directions.extend(row);
                break;
            }
        }
    }
    let mut head = LmclHead::new(classes, dim_out, directions, scale, margin)?;
    head.renormalize()?;
    Ok((projection, head))
}

pub(crate) fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
