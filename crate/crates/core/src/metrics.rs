//! Localization metrics reported per query.

use crate::attribute::{check_dims, sq_dist, uniform_point, AnsweredQuery, AttributeVector};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Squared error averaged over dimensions, `‖estimate − target‖² / d`.
pub fn metric_mse(estimate: &AttributeVector, target: &AttributeVector) -> Result<f64> {
    check_dims(target.dim(), estimate.dim())?;
    Ok(sq_dist(estimate.as_slice(), target.as_slice()) / estimate.dim() as f64)
}

/// Percentage of `batch` uniform points strictly closer to `target` than `estimate` is.
pub fn metric_percentage_closer(
    estimate: &AttributeVector,
    target: &AttributeVector,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    check_dims(target.dim(), estimate.dim())?;
    if batch == 0 {
        return Err(Error::invalid("batch must be >= 1"));
    }
    let radius = sq_dist(estimate.as_slice(), target.as_slice());
    let mut rng = rng_from_seed(seed);
    let closer = (0..batch)
        .filter(|_| sq_dist(uniform_point(&mut rng, target.dim()).as_slice(), target.as_slice()) < radius)
        .count();
    Ok(100.0 * closer as f64 / batch as f64)
}

/// Percentage of answered queries whose preferred member is strictly nearer to
/// `estimate` than the rejected one.
pub fn metric_constraint_satisfaction(estimate: &AttributeVector, answered: &[AnsweredQuery]) -> Result<f64> {
    if answered.is_empty() {
        return Err(Error::invalid("constraint satisfaction needs at least one answered query"));
    }
    let e = estimate.as_slice();
    let mut satisfied = 0usize;
    for q in answered {
        check_dims(estimate.dim(), q.dim())?;
        if sq_dist(e, q.preferred().as_slice()) < sq_dist(e, q.rejected().as_slice()) {
            satisfied += 1;
        }
    }
    Ok(100.0 * satisfied as f64 / answered.len() as f64)
}
