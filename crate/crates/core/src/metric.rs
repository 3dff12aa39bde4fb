use crate::error::{check_dim, Error, Result};
use crate::model::{cost, ClusteringSolution, PointSet, Power, WeightedPointSet};
use crate::seeding::solve;

/// Distortion of a coreset: solve the clustering problem on the coreset (weighted D²
/// seeding plus Lloyd), then compare that solution's cost on the coreset and on the full
/// data. Returns `max(a/b, b/a) >= 1`, or `+inf` if the coreset cost vanishes while the
/// full cost does not.
pub fn distortion(
    full: &PointSet,
    coreset: &WeightedPointSet,
    k: usize,
    power: Power,
    solver_seed: u64,
) -> Result<f64> {
    Ok(distortion_with_solution(full, coreset, k, power, solver_seed)?.0)
}

/// [`distortion`] together with the solution it was evaluated at.
pub fn distortion_with_solution(
    full: &PointSet,
    coreset: &WeightedPointSet,
    k: usize,
    power: Power,
    solver_seed: u64,
) -> Result<(f64, ClusteringSolution)> {
    check_dim(full.d(), coreset.points().d())?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let sol = solve(coreset, k, power, solver_seed)?;
    let on_full = cost(full, &sol)?;
    let on_coreset = cost(coreset, &sol)?;
    Ok((ratio(on_full, on_coreset), sol))
}

pub(crate) fn ratio(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (false, false) => 1.0,
        (true, false) | (false, true) => f64::INFINITY,
        (true, true) => (a / b).max(b / a),
    }
}
