use super::{MetricError, Projection};
use crate::util;

/// A mined triplet, as batch indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Debug)]
pub struct TripletOutput {
    pub loss: f64,
    pub grad_proj: Vec<f64>,
    /// One entry per anchor-positive pair, in (anchor, positive) order.
    pub triplets: Vec<Triplet>,
}

/// Hinge on one triplet's distances.
pub fn triplet_term(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// Picks the negative for an anchor-positive pair: the closest negative
/// strictly farther than the positive, or the closest negative overall when
/// none is. Ties go to the lower index.
pub fn select_negative(dists: &[f64], labels: &[usize], anchor: usize, d_ap: f64) -> Option<usize> {
    let mut semi: Option<usize> = None;
    let mut hardest: Option<usize> = None;
    for (n, (&d, &l)) in dists.iter().zip(labels).enumerate() {
        if l == labels[anchor] {
            continue;
        }
        if hardest.is_none_or(|h| d < dists[h]) {
            hardest = Some(n);
        }
        if d > d_ap && semi.is_none_or(|s| d < dists[s]) {
            semi = Some(n);
        }
    }
    semi.or(hardest)
}

/// Mean triplet loss over every anchor-positive pair in the batch, with
/// distances taken between unit-normalized projections and negatives mined
/// semi-hard within the batch. Anchors without a same-class partner
/// contribute no terms.
pub fn triplet_loss(
    batch: &[(&[f64], usize)],
    proj: &Projection,
    margin: f64,
) -> Result<TripletOutput, MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let labels: Vec<usize> = batch.iter().map(|&(_, y)| y).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(MetricError::SingleClassBatch);
    }
    let (d_in, d_out) = (proj.dim_in(), proj.dim_out());
    let mut units = Vec::with_capacity(batch.len());
    for (i, &(x, _)) in batch.iter().enumerate() {
        if x.len() != d_in {
            return Err(MetricError::DimensionMismatch {
                expected: d_in,
                found: x.len(),
            });
        }
        let z = proj.apply_unchecked(x);
        units.push(util::unit(&z).ok_or(MetricError::ZeroNormProjection { item: i })?);
    }
    let n = batch.len();
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| util::euclid(&units[a].0, &units[b].0)).collect())
        .collect();

    let mut total = 0.0;
    let mut triplets = Vec::new();
    let mut grad_u = vec![vec![0.0; d_out]; n];
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = dist[a][p];
            let Some(neg) = select_negative(&dist[a], &labels, a, d_ap) else {
                continue;
            };
            triplets.push(Triplet { anchor: a, positive: p, negative: neg });
            let d_an = dist[a][neg];
            let term = triplet_term(d_ap, d_an, margin);
            total += term;
            if term <= 0.0 {
                continue;
            }
            // ∂‖u_a - u_b‖/∂u_a = (u_a - u_b)/‖u_a - u_b‖; zero subgradient at 0.
            if d_ap > 0.0 {
                for t in 0..d_out {
                    let g = (units[a].0[t] - units[p].0[t]) / d_ap;
                    grad_u[a][t] += g;
                    grad_u[p][t] -= g;
                }
            }
            if d_an > 0.0 {
                for t in 0..d_out {
                    let g = (units[a].0[t] - units[neg].0[t]) / d_an;
                    grad_u[a][t] -= g;
                    grad_u[neg][t] += g;
                }
            }
        }
    }

    let mut grad_proj = vec![0.0; d_in * d_out];
    if triplets.is_empty() {
        return Ok(TripletOutput { loss: 0.0, grad_proj, triplets });
    }
    let count = triplets.len() as f64;
    for (i, &(x, _)) in batch.iter().enumerate() {
        if grad_u[i].iter().all(|g| *g == 0.0) {
            continue;
        }
        let (u, norm) = &units[i];
        let grad_z = util::unit_backward(u, *norm, &grad_u[i]);
        for (r, gz) in grad_z.iter().enumerate() {
            let gz = gz / count;
            let row = &mut grad_proj[r * d_in..(r + 1) * d_in];
            for (g, xv) in row.iter_mut().zip(x) {
                *g += gz * xv;
            }
        }
    }
    Ok(TripletOutput {
        loss: total / count,
        grad_proj,
        triplets,
    })
}
