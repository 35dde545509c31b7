use super::{MetricError, Projection, LmclHead};
use crate::util::{self, dot};

/// Loss value and gradients of one large-margin cosine loss evaluation.
///
/// `grad_proj` is laid out like [`Projection::weights`] and `grad_head`
/// like [`LmclHead::directions`].
#[derive(Clone, Debug)]
pub struct LmclOutput {
    pub loss: f64,
    pub grad_proj: Vec<f64>,
    pub grad_head: Vec<f64>,
}

/// Mean large-margin cosine loss over `batch`:
///
/// ```text
/// L = -log( e^{s(cos θ_y - m)} / (e^{s(cos θ_y - m)} + Σ_{j≠y} e^{s cos θ_j}) )
/// ```
///
/// where `cos θ_j` is the cosine between `W x` and direction `j`. Directions
/// are normalized inside the loss, so `grad_head` is the gradient with
/// respect to the stored (possibly unnormalized) rows.
pub fn lmcl_loss(
    batch: &[(&[f64], usize)],
    proj: &Projection,
    head: &LmclHead,
) -> Result<LmclOutput, MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    if head.dim() != proj.dim_out() {
        return Err(MetricError::InvalidShape(format!(
            "head dimension {} does not match projection output {}",
            head.dim(),
            proj.dim_out()
        )));
    }
    let k = head.classes();
    let (d_in, d_out) = (proj.dim_in(), proj.dim_out());
    let (s, m) = (head.scale, head.margin);

    let mut dirs = Vec::with_capacity(k);
    for j in 0..k {
        dirs.push(util::unit(head.direction(j)).ok_or(MetricError::ZeroNorm)?);
    }

    let mut loss = 0.0;
    let mut grad_proj = vec![0.0; d_in * d_out];
    let mut grad_dirs = vec![vec![0.0; d_out]; k];
    let mut logits = vec![0.0; k];

    for (i, &(x, y)) in batch.iter().enumerate() {
        if y >= k {
            return Err(MetricError::ClassIndex { index: y, classes: k });
        }
        if x.len() != d_in {
            return Err(MetricError::DimensionMismatch {
                expected: d_in,
                found: x.len(),
            });
        }
        let z = proj.apply_unchecked(x);
        let (u, z_norm) = util::unit(&z).ok_or(MetricError::ZeroNormProjection { item: i })?;

        for (j, (w, _)) in dirs.iter().enumerate() {
            let cos = dot(&u, w);
            logits[j] = s * if j == y { cos - m } else { cos };
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        loss += lse - logits[y];

        // dL/dcos_j = s (p_j - [j = y])
        let mut grad_u = vec![0.0; d_out];
        for (j, (w, _)) in dirs.iter().enumerate() {
            let p = (logits[j] - lse).exp();
            let g = s * (p - if j == y { 1.0 } else { 0.0 });
            for t in 0..d_out {
                grad_u[t] += g * w[t];
                grad_dirs[j][t] += g * u[t];
            }
        }
        let grad_z = util::unit_backward(&u, z_norm, &grad_u);
        for (r, gz) in grad_z.iter().enumerate() {
            let row = &mut grad_proj[r * d_in..(r + 1) * d_in];
            for (g, xv) in row.iter_mut().zip(x) {
                *g += gz * xv;
            }
        }
    }

    let n = batch.len() as f64;
    grad_proj.iter_mut().for_each(|g| *g /= n);
    let mut grad_head = Vec::with_capacity(k * d_out);
    for (gd, (w, norm)) in grad_dirs.iter().zip(&dirs) {
        let scaled: Vec<f64> = gd.iter().map(|g| g / n).collect();
        grad_head.extend(util::unit_backward(w, *norm, &scaled));
    }
    Ok(LmclOutput {
        loss: loss / n,
        grad_proj,
        grad_head,
    })
}
