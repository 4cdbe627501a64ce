use super::Parameters;
use crate::error::{Error, Result};
use crate::math;

/// L2 norm over every value of every group.
pub fn global_norm<P: Parameters>(grads: &P) -> f64 {
    let sum: f64 = grads
        .groups()
        .iter()
        .map(|(_, g)| g.iter().map(|x| x * x).sum::<f64>())
        .sum();
    math::sqrt(sum)
}

/// Global-norm clipping: if the joint L2 norm of all gradients exceeds
/// `threshold`, every gradient is scaled by `threshold / norm`.
///
/// Returns the norm measured before clipping.
pub fn clip_gradients<P: Parameters>(grads: &mut P, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(alloc::format!(
            "clip threshold must be positive, got {threshold}"
        )));
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    if norm > threshold {
        let scale = threshold / norm;
        for (_, g) in grads.groups_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    Ok(norm)
}
