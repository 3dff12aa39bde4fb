//! Dense Gaussian random projections to `O(log k)` dimensions.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::PointSet;
use crate::par;
use crate::rng::rng_from_seed;

/// A `d x target_dim` projection matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOperator {
    matrix: Vec<f64>,
    source_dim: usize,
    target_dim: usize,
    seed: u64,
}

/// `min(d, max(20, ceil(4 ln k)))`.
pub fn target_dim(d: usize, k: usize) -> usize {
    let log_term = (4.0 * (k.max(1) as f64).ln()).ceil() as usize;
    d.min(log_term.max(20))
}

pub fn make_projection(d: usize, k: usize, seed: u64) -> Result<ProjectionOperator> {
    if d == 0 || k == 0 {
        return Err(Error::invalid("projection needs d >= 1 and k >= 1"));
    }
    let t = target_dim(d, k);
    let scale = 1.0 / (t as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let matrix = (0..d * t)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();
    Ok(ProjectionOperator { matrix, source_dim: d, target_dim: t, seed })
}

impl ProjectionOperator {
    /// Uses an explicit matrix instead of a random one (for example an orthonormal basis).
    pub fn from_matrix(source_dim: usize, target_dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if source_dim == 0 || target_dim == 0 || target_dim > source_dim {
            return Err(Error::invalid(format!("target dimension {target_dim} must be in 1..={source_dim}")));
        }
        if matrix.len() != source_dim * target_dim {
            return Err(Error::invalid("matrix size does not match its dimensions"));
        }
        Ok(ProjectionOperator { matrix, source_dim, target_dim, seed: 0 })
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// `data * matrix`.
pub fn project(data: &PointSet, op: &ProjectionOperator) -> Result<PointSet> {
    check_dim(op.source_dim, data.d())?;
    let t = op.target_dim;
    let rows = par::map_indices(data.n(), |i| {
        let mut out = vec![0.0; t];
        for (x, row) in data.row(i).iter().zip(op.matrix.chunks_exact(t)) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += x * m;
            }
        }
        out
    });
    Ok(PointSet::from_raw(t, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dist;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn gaussian(n: usize, d: usize, seed: u64) -> PointSet {
        let mut rng = rng_from_seed(seed);
        PointSet::new(d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn target_dimension_formula() {
        assert_eq!(target_dim(784, 100), 20);
        assert_eq!(target_dim(10, 1000), 10);
        assert_eq!(target_dim(500, 1_000_000), 56);
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = make_projection(50, 10, 3).unwrap();
        let b = make_projection(50, 10, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_projection(50, 10, 4).unwrap());
    }

    #[test]
    fn zeros_project_to_zeros() {
        let p = PointSet::new(30, vec![0.0; 90]).unwrap();
        let op = make_projection(30, 5, 1).unwrap();
        assert!(project(&p, &op).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let p = gaussian(3, 4, 1);
        let op = make_projection(5, 5, 1).unwrap();
        assert!(project(&p, &op).is_err());
    }

    #[test]
    fn orthonormal_override_is_an_isometry() {
        // rotation in the plane of the first two axes, identity elsewhere
        let d = 4;
        let (c, s) = (0.6, 0.8);
        let mut m = vec![0.0; d * d];
        m[0] = c;
        m[1] = -s;
        m[d] = s;
        m[d + 1] = c;
        m[2 * d + 2] = 1.0;
        m[3 * d + 3] = 1.0;
        let op = ProjectionOperator::from_matrix(d, d, m).unwrap();
        let p = gaussian(40, d, 5);
        let q = project(&p, &op).unwrap();
        for i in 0..40 {
            for j in 0..i {
                let a = dist(p.row(i), p.row(j));
                let b = dist(q.row(i), q.row(j));
                assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }

    fn pair_preservation(seed: u64) -> f64 {
        let p = gaussian(2000, 100, seed);
        let op = make_projection(100, 100, seed + 100).unwrap();
        let q = project(&p, &op).unwrap();
        let mut rng = rng_from_seed(seed + 200);
        let mut good = 0;
        for _ in 0..1000 {
            let i = rng.random_range(0..2000);
            let mut j = rng.random_range(0..2000);
            if j == i {
                j = (i + 1) % 2000;
            }
            let ratio = dist(q.row(i), q.row(j)) / dist(p.row(i), p.row(j));
            good += (0.5..=1.5).contains(&ratio) as usize;
        }
        good as f64 / 1000.0
    }

    #[test]
    fn projected_distances_concentrate() {
        let passing = (0..5).filter(|&s| pair_preservation(s) >= 0.99).count();
        assert!(passing >= 4, "only {passing}/5 seeds preserved 99% of pairs");
    }

    proptest::proptest! {
        #[test]
        fn projection_is_linear(seed in 0u64..200, alpha in -4.0f64..4.0) {
            let p = gaussian(10, 30, seed);
            let op = make_projection(30, 8, seed).unwrap();
            let scaled_first = project(&p.scaled(alpha), &op).unwrap();
            let scaled_after = project(&p, &op).unwrap().scaled(alpha);
            for (a, b) in scaled_first.as_slice().iter().zip(scaled_after.as_slice()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
