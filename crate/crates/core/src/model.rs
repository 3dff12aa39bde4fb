//! Point sets, clustering solutions, and the distance and cost kernels shared by every
//! other module.

use std::fmt;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par;

/// Dense `n x d` matrix of finite coordinates, stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl fmt::Debug for PointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointSet").field("n", &self.n).field("d", &self.d).finish()
    }
}

impl PointSet {
    /// Builds a point set from row-major coordinates.
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::invalid("point set must contain at least one point"));
        }
        if data.len() % d != 0 {
            return Err(Error::invalid(format!("{} coordinates do not divide into rows of dimension {d}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate at row {}, column {}", pos / d, pos % d)));
        }
        Ok(PointSet { n: data.len() / d, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::invalid(format!("row {i} has {} columns, expected {d}", r.len())));
            }
            data.extend_from_slice(r);
        }
        PointSet::new(d, data)
    }

    /// Same as [`PointSet::new`] but skips validation; used for internally derived sets.
    pub(crate) fn from_raw(d: usize, data: Vec<f64>) -> Self {
        debug_assert!(d > 0 && !data.is_empty() && data.len() % d == 0);
        PointSet { n: data.len() / d, d, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointSet::from_raw(self.d, data)
    }

    /// Stacks several point sets of equal dimension.
    pub fn concat(parts: &[&PointSet]) -> Result<PointSet> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut data = Vec::new();
        for p in parts {
            check_dim(first.d, p.d)?;
            data.extend_from_slice(&p.data);
        }
        Ok(PointSet::from_raw(first.d, data))
    }

    pub fn scaled(&self, factor: f64) -> PointSet {
        PointSet::from_raw(self.d, self.data.iter().map(|v| v * factor).collect())
    }

    /// Number of distinct rows (bitwise comparison of coordinates, with `-0.0 == 0.0`).
    pub fn distinct_count(&self) -> usize {
        self.distinct_count_at_least(usize::MAX)
    }

    /// Counts distinct rows, stopping early once `cap` has been reached.
    pub fn distinct_count_at_least(&self, cap: usize) -> usize {
        let mut seen: FxHashSet<Vec<u64>> = FxHashSet::default();
        for r in self.rows() {
            seen.insert(r.iter().map(|v| (v + 0.0).to_bits()).collect());
            if seen.len() >= cap {
                break;
            }
        }
        seen.len()
    }
}

/// Points with strictly positive weights; the representation of a coreset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointSet {
    points: PointSet,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: PointSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.n() {
            return Err(Error::invalid(format!("{} weights for {} points", weights.len(), points.n())));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!("weight {i} is {} (must be finite and > 0)", weights[i])));
        }
        Ok(WeightedPointSet { points, weights })
    }

    /// Every point with weight 1.
    pub fn unit(points: PointSet) -> Self {
        let n = points.n();
        WeightedPointSet { points, weights: vec![1.0; n] }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_weight(&self) -> f64 {
        par::sum_slice(&self.weights)
    }

    pub fn into_parts(self) -> (PointSet, Vec<f64>) {
        (self.points, self.weights)
    }

    /// Concatenates weighted sets, carrying weights over unchanged.
    pub fn concat(parts: &[&WeightedPointSet]) -> Result<WeightedPointSet> {
        let points = PointSet::concat(&parts.iter().map(|p| &p.points).collect::<Vec<_>>())?;
        let weights = parts.iter().flat_map(|p| p.weights.iter().copied()).collect();
        Ok(WeightedPointSet { points, weights })
    }
}

/// Anything that can be clustered: a point set with an implicit or explicit weight per point.
pub trait Dataset: Sync {
    fn points(&self) -> &PointSet;
    fn weight(&self, i: usize) -> f64;
    /// `None` when every weight is 1.
    fn weights(&self) -> Option<&[f64]>;

    fn len(&self) -> usize {
        self.points().n()
    }
    fn dim(&self) -> usize {
        self.points().d()
    }
    fn total_weight(&self) -> f64 {
        match self.weights() {
            Some(w) => par::sum_slice(w),
            None => self.len() as f64,
        }
    }
}

impl Dataset for PointSet {
    fn points(&self) -> &PointSet {
        self
    }
    #[inline]
    fn weight(&self, _i: usize) -> f64 {
        1.0
    }
    fn weights(&self) -> Option<&[f64]> {
        None
    }
}

impl Dataset for WeightedPointSet {
    fn points(&self) -> &PointSet {
        &self.points
    }
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
    fn weights(&self) -> Option<&[f64]> {
        Some(&self.weights)
    }
}

/// The exponent `z` of the clustering objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Power {
    /// `z = 1`
    KMedian,
    /// `z = 2`
    KMeans,
}

impl Power {
    pub fn from_z(z: u32) -> Result<Power> {
        match z {
            1 => Ok(Power::KMedian),
            2 => Ok(Power::KMeans),
            _ => Err(Error::invalid(format!("power z must be 1 or 2, got {z}"))),
        }
    }

    pub fn z(self) -> u32 {
        match self {
            Power::KMedian => 1,
            Power::KMeans => 2,
        }
    }

    /// `dist^z` from a squared distance.
    #[inline]
    pub fn of_sq(self, sq: f64) -> f64 {
        match self {
            Power::KMedian => sq.sqrt(),
            Power::KMeans => sq,
        }
    }

    /// `dist^z` from a distance.
    #[inline]
    pub fn of_dist(self, dist: f64) -> f64 {
        match self {
            Power::KMedian => dist,
            Power::KMeans => dist * dist,
        }
    }
}

/// `k` centers and the objective they target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSolution {
    pub centers: PointSet,
    pub power: Power,
}

impl ClusteringSolution {
    pub fn new(centers: PointSet, power: Power) -> Self {
        ClusteringSolution { centers, power }
    }

    pub fn k(&self) -> usize {
        self.centers.n()
    }

    pub fn d(&self) -> usize {
        self.centers.d()
    }
}

/// Nearest-center labels and distances for every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Largest label plus one.
    pub fn num_labels(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        acc += t * t;
    }
    acc
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Index and squared distance of the nearest center; ties go to the lowest index.
#[inline]
pub(crate) fn nearest(p: &[f64], centers: &PointSet) -> (usize, f64) {
    let mut best = 0;
    let mut best_sq = f64::INFINITY;
    for (j, c) in centers.rows().enumerate() {
        let sq = sq_dist(p, c);
        if sq < best_sq {
            best_sq = sq;
            best = j;
        }
    }
    (best, best_sq)
}

/// Weighted clustering cost `sum_p w_p * dist(p, C)^z`.
pub fn cost<D: Dataset + ?Sized>(data: &D, sol: &ClusteringSolution) -> Result<f64> {
    check_dim(sol.d(), data.dim())?;
    let pts = data.points();
    Ok(par::chunked_sum(pts.n(), |i| {
        let (_, sq) = nearest(pts.row(i), &sol.centers);
        data.weight(i) * sol.power.of_sq(sq)
    }))
}

/// Assigns every point to its nearest center (lowest index on ties).
pub fn assign(data: &PointSet, sol: &ClusteringSolution) -> Result<Assignment> {
    check_dim(sol.d(), data.d())?;
    let pairs = par::map_indices(data.n(), |i| nearest(data.row(i), &sol.centers));
    let (labels, distances) = pairs.into_iter().map(|(l, sq)| (l, sq.sqrt())).unzip();
    Ok(Assignment { labels, distances })
}

/// Cost of an explicit assignment (each point pays its stored distance).
pub fn assignment_cost<D: Dataset + ?Sized>(data: &D, asg: &Assignment, power: Power) -> f64 {
    par::chunked_sum(asg.len(), |i| data.weight(i) * power.of_dist(asg.distances[i]))
}

/// Diameter and minimum-distance scales of a point set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSummary {
    pub diameter_upper: f64,
    pub min_nonzero_dist: f64,
    pub spread: f64,
    /// Whether `min_nonzero_dist` is exact or a grid estimate.
    pub exact_min: bool,
}

/// Default largest `n` for which the exact quadratic minimum-distance scan is used.
pub const SPREAD_EXACT_CAP: usize = 10_000;

/// Upper bound on the diameter (twice the largest distance to the first point).
pub fn diameter_upper(data: &PointSet) -> f64 {
    let anchor = data.row(0);
    let mut max_sq: f64 = 0.0;
    for r in data.rows() {
        max_sq = max_sq.max(sq_dist(anchor, r));
    }
    2.0 * max_sq.sqrt()
}

/// Spread of `data`, with the exact minimum distance up to `exact_cap` points and a
/// quadtree estimate above it.
pub fn spread_summary(data: &PointSet, exact_cap: usize) -> Result<SpreadSummary> {
    let diameter_upper = diameter_upper(data);
    if diameter_upper == 0.0 {
        return Err(Error::Degenerate("all points are identical; spread is undefined".into()));
    }
    let (min_nonzero_dist, exact_min) =
        if data.n() <= exact_cap { (exact_min_nonzero(data), true) } else { (estimate_min_nonzero(data), false) };
    let spread = (diameter_upper / min_nonzero_dist).max(1.0);
    Ok(SpreadSummary { diameter_upper, min_nonzero_dist, spread, exact_min })
}

fn exact_min_nonzero(data: &PointSet) -> f64 {
    let n = data.n();
    let best = par::map_indices(n, |i| {
        let p = data.row(i);
        let mut m = f64::INFINITY;
        for j in (i + 1)..n {
            let sq = sq_dist(p, data.row(j));
            if sq > 0.0 && sq < m {
                m = sq;
            }
        }
        m
    });
    best.into_iter().fold(f64::INFINITY, f64::min).sqrt()
}

/// Side of the coarsest unshifted grid level at which every distinct point sits in its
/// own cell; found by binary search over levels.
fn estimate_min_nonzero(data: &PointSet) -> f64 {
    let d = data.d();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in data.rows() {
        for i in 0..d {
            lo[i] = lo[i].min(r[i]);
            hi[i] = hi[i].max(r[i]);
        }
    }
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let distinct = data.distinct_count();
    let origin = crate::quadtree::GridConfig { cell_side: extent, shift: lo, seed: 0 };
    let separated = |level: u32| {
        let grid = origin.with_side(extent / 2f64.powi(level as i32));
        crate::quadtree::count_cells_capped(data, &grid, distinct) >= distinct
    };
    const MAX_LEVEL: u32 = 60;
    let (mut a, mut b) = (0u32, MAX_LEVEL);
    if !separated(b) {
        return extent / 2f64.powi(MAX_LEVEL as i32);
    }
    while a < b {
        let mid = (a + b) / 2;
        if separated(mid) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    extent / 2f64.powi(a as i32)
}
