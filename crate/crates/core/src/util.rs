//! Small numeric and I/O helpers shared across modules.

use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `a / ‖a‖₂` together with the norm, or `None` for a zero (or
/// non-finite) norm.
pub(crate) fn unit(a: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = l2_norm(a);
    if n > 0.0 && n.is_finite() {
        Some((a.iter().map(|v| v / n).collect(), n))
    } else {
        None
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Backpropagates `grad_out` (gradient w.r.t. `v = a/‖a‖`) to a gradient
/// w.r.t. `a`.
pub(crate) fn unit_backward(v: &[f64], norm: f64, grad_out: &[f64]) -> Vec<f64> {
    let proj = dot(v, grad_out);
    v.iter()
        .zip(grad_out)
        .map(|(vi, gi)| (gi - vi * proj) / norm)
        .collect()
}

/// Deterministic generator keyed by a seed and an independent stream id.
pub(crate) fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
