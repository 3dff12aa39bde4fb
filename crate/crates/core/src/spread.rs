//! Spread reduction: a crude cost bound from grid counting, compression of far-apart
//! boxes, coordinate rounding, and transfer of solutions between the original and the
//! reduced instance.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{diameter_upper, ClusteringSolution, PointSet, Power};
use crate::quadtree::{count_distinct_cells, group_by_cell, CellId, GridConfig};
use crate::rng::derive_seed;

/// Output of [`crude_approx`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrudeBound {
    /// Upper bound on the optimal cost for `power`.
    pub upper: f64,
    /// Upper bound on the optimal k-median cost; all grid geometry is derived from it.
    pub median_upper: f64,
    /// Finest level with at most `k` occupied cells (`-1` if even level 0 has more).
    pub level: i32,
    pub power: Power,
    /// Number of counting passes performed.
    pub passes: u32,
}

/// Binary search over the levels of a shifted quadtree for the finest level where the
/// data still fits in `k` cells. One point per occupied cell of that level is a feasible
/// solution, so `n * sqrt(d) * side` bounds the k-median cost from above; the k-means
/// bound is `n` times its square.
pub fn crude_approx(data: &PointSet, k: usize, power: Power, seed: u64) -> Result<CrudeBound> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if data.distinct_count_at_least(k + 1) < k + 1 {
        return Err(Error::Degenerate(format!(
            "fewer than k + 1 = {} distinct points; skip spread reduction for this input",
            k + 1
        )));
    }
    let n = data.n() as f64;
    let d = data.d() as f64;
    let top = diameter_upper(data);
    let grid = GridConfig::random(data.d(), top, seed);
    let mut passes = 0u32;
    let mut spans = |level: u32| {
        passes += 1;
        count_distinct_cells(data, &grid.with_side(top / 2f64.powi(level as i32)), k + 1)
    };

    // levels are relative to the diameter bound, so 66 covers a spread of 2^64
    let mut lo = 0u32;
    let mut hi = 66u32;
    let mut hi_known = false;
    let first_true = loop {
        while lo < hi {
            let mid = (lo + hi) / 2;
            if spans(mid) {
                hi = mid;
                hi_known = true;
            } else {
                lo = mid + 1;
            }
        }
        if hi_known || spans(hi) {
            break hi;
        }
        if hi >= 1024 {
            return Err(Error::Numerical("points too close together to separate on a grid".into()));
        }
        lo = hi + 1;
        hi *= 2;
    };

    let (level, median_upper) = if first_true == 0 {
        (-1, n * top)
    } else {
        let level = first_true as i32 - 1;
        (level, n * d.sqrt() * top / 2f64.powi(level))
    };
    let upper = match power {
        Power::KMedian => median_upper,
        Power::KMeans => n * median_upper * median_upper,
    };
    Ok(CrudeBound { upper, median_upper, level, power, passes })
}

/// How a reduced instance was derived from the original one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadReductionMap {
    pub d: usize,
    /// Side of the boxes.
    pub r: f64,
    pub grid: GridConfig,
    /// Cell of every box, in order of first occurrence.
    pub boxes: Vec<CellId>,
    /// Box id of every point.
    pub box_of_point: Vec<u32>,
    /// Translation subtracted from the points of each box (`boxes.len() x d`, row-major).
    pub box_translation: Vec<f64>,
    /// Rounding grid; 0 until coordinates have been rounded.
    pub g: f64,
}

impl SpreadReductionMap {
    pub fn box_count(&self) -> usize {
        self.boxes.len()
    }

    pub fn translation_of_box(&self, b: usize) -> &[f64] {
        &self.box_translation[b * self.d..(b + 1) * self.d]
    }

    /// Translation applied to point `i`.
    pub fn translation(&self, i: usize) -> &[f64] {
        self.translation_of_box(self.box_of_point[i] as usize)
    }

    /// A map that moves nothing, with every point in one box.
    pub fn identity(n: usize, d: usize) -> SpreadReductionMap {
        SpreadReductionMap {
            d,
            r: f64::INFINITY,
            grid: GridConfig { cell_side: f64::INFINITY, shift: vec![0.0; d], seed: 0 },
            boxes: vec![CellId(vec![0; d])],
            box_of_point: vec![0; n],
            box_translation: vec![0.0; d],
            g: 0.0,
        }
    }

    /// Squared distance from `c` to box `b`, optionally translated into reduced space.
    fn box_sq_dist(&self, c: &[f64], b: usize, translated: bool) -> f64 {
        if !self.r.is_finite() {
            return 0.0;
        }
        let t = self.translation_of_box(b);
        let mut acc = 0.0;
        for i in 0..self.d {
            let mut lo = self.grid.cell_lower(&self.boxes[b], i);
            if translated {
                lo -= t[i];
            }
            let hi = lo + self.r;
            let gap = if c[i] < lo {
                lo - c[i]
            } else if c[i] >= hi {
                c[i] - hi
            } else {
                0.0
            };
            acc += gap * gap;
        }
        acc
    }
}

/// Smallest power of two that is at least `ulp(x)` for every coordinate of magnitude up
/// to `max_abs`; multiples of it can be subtracted from such coordinates without adding
/// rounding error in the common case.
fn translation_quantum(max_abs: f64) -> f64 {
    if max_abs <= 0.0 || !max_abs.is_finite() {
        return f64::MIN_POSITIVE;
    }
    2f64.powi(max_abs.log2().ceil() as i32 - 52)
}

/// Diameter reduction with a randomly shifted grid of side `r = sqrt(d) * n^2 * U`.
pub fn reduce_diameter(data: &PointSet, bound: &CrudeBound, seed: u64) -> Result<(PointSet, SpreadReductionMap)> {
    if !(bound.median_upper > 0.0) {
        return Err(Error::invalid("crude bound must be positive"));
    }
    let n = data.n() as f64;
    let r = (data.d() as f64).sqrt() * n * n * bound.median_upper;
    if !r.is_finite() {
        return Err(Error::Numerical("box side overflows; rescale the coordinates".into()));
    }
    Ok(reduce_diameter_on_grid(data, &GridConfig::random(data.d(), r, seed)))
}

/// Diameter reduction on an explicit grid: occupied cells become boxes and, per
/// dimension, every gap of at least `2r` between consecutive box centers is shrunk to
/// exactly `2r` (up to the translation quantum) by translating the boxes on the far side
/// of the gap; the box nearest the origin stays put.
pub fn reduce_diameter_on_grid(data: &PointSet, grid: &GridConfig) -> (PointSet, SpreadReductionMap) {
    let d = data.d();
    let r = grid.cell_side;
    let (box_of_point, boxes) = group_by_cell(data, grid);
    let nb = boxes.len();
    let centers: Vec<f64> =
        boxes.iter().flat_map(|cell| (0..d).map(move |i| grid.cell_lower(cell, i) + 0.5 * r)).collect();
    let max_abs = data.as_slice().iter().chain(&centers).fold(0.0f64, |m, v| m.max(v.abs()));
    let q = translation_quantum(max_abs);
    let mut translation = vec![0.0; nb * d];
    let mut sorted: Vec<usize> = (0..nb).collect();
    for i in 0..d {
        sorted.sort_by(|&a, &b| centers[a * d + i].total_cmp(&centers[b * d + i]).then(a.cmp(&b)));
        let mut delta = 0.0;
        for w in sorted.windows(2) {
            let gap = centers[w[1] * d + i] - centers[w[0] * d + i];
            if gap >= 2.0 * r {
                delta += ((gap - 2.0 * r) / q).floor() * q;
            }
            translation[w[1] * d + i] = delta;
        }
        // keep the box nearest the origin in place, so boxes move toward small
        // magnitudes where the subtraction stays exact
        let anchor = (0..nb)
            .min_by(|&a, &b| centers[a * d + i].abs().total_cmp(&centers[b * d + i].abs()).then(a.cmp(&b)))
            .unwrap();
        let base = translation[anchor * d + i];
        if base != 0.0 {
            for b in 0..nb {
                translation[b * d + i] -= base;
            }
        }
    }
    let mut out = Vec::with_capacity(data.n() * d);
    for (p, &b) in data.rows().zip(&box_of_point) {
        let t = &translation[b as usize * d..(b as usize + 1) * d];
        out.extend(p.iter().zip(t).map(|(x, s)| x - s));
    }
    let map =
        SpreadReductionMap { d, r, grid: grid.clone(), boxes, box_of_point, box_translation: translation, g: 0.0 };
    (PointSet::from_raw(d, out), map)
}

/// The rounding grid `U / (n^4 d^2 log_spread)`.
pub fn rounding_grid(n: usize, d: usize, bound: &CrudeBound, log_spread: f64) -> Result<f64> {
    let n = n as f64;
    let d = d as f64;
    let g = bound.median_upper / (n.powi(4) * d * d * log_spread.max(1.0));
    if !(g.is_normal()) {
        return Err(Error::Numerical(format!(
            "rounding grid {g:e} underflows; rescale the coordinates (e.g. divide by the smallest nonzero distance)"
        )));
    }
    Ok(g)
}

/// Rounds every coordinate to the nearest multiple of `g` (ties toward +inf).
pub fn round_to_grid(data: &PointSet, g: f64) -> PointSet {
    let out = data
        .as_slice()
        .iter()
        .map(|&x| {
            let y = (x / g + 0.5).floor() * g;
            // beyond 2^52 multiples the quotient itself is inexact; keep x then
            if (y - x).abs() <= 0.5 * g {
                y
            } else {
                x
            }
        })
        .collect();
    PointSet::from_raw(data.d(), out)
}

pub fn reduce_min_distance(data: &PointSet, bound: &CrudeBound, log_spread: f64) -> Result<(PointSet, f64)> {
    let g = rounding_grid(data.n(), data.d(), bound, log_spread)?;
    Ok((round_to_grid(data, g), g))
}

/// `max(1, ceil(log2(diameter_upper)))`: the log-spread estimate used inside the rounding
/// grid, with the minimum distance taken as 1.
pub fn log_spread_estimate(data: &PointSet) -> f64 {
    diameter_upper(data).log2().ceil().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// From the original instance to the reduced one.
    Forward,
    /// From the reduced instance back to the original one.
    Backward,
}

/// Moves each center by the translation of the box it belongs to: the box whose cell
/// (translated, for `Backward`) contains it, otherwise the nearest such cell (lowest box
/// id on ties). Centers farther than `3r` from every box are logged.
pub fn transfer_solution(
    sol: &ClusteringSolution,
    map: &SpreadReductionMap,
    direction: Direction,
) -> Result<ClusteringSolution> {
    check_dim(map.d, sol.d())?;
    let translated = direction == Direction::Backward;
    let mut out = Vec::with_capacity(sol.k() * map.d);
    for c in sol.centers.rows() {
        let mut best = (0usize, f64::INFINITY);
        for b in 0..map.box_count() {
            let sq = map.box_sq_dist(c, b, translated);
            if sq < best.1 {
                best = (b, sq);
                if sq == 0.0 {
                    break;
                }
            }
        }
        if best.1.sqrt() > 3.0 * map.r {
            log::warn!("center lies outside every box's 3r neighbourhood; attributed to box {}", best.0);
        }
        let t = map.translation_of_box(best.0);
        match direction {
            Direction::Forward => out.extend(c.iter().zip(t).map(|(x, s)| x - s)),
            Direction::Backward => out.extend(c.iter().zip(t).map(|(x, s)| x + s)),
        }
    }
    Ok(ClusteringSolution::new(PointSet::from_raw(map.d, out), sol.power))
}

/// Everything produced by [`reduce_spread`].
#[derive(Clone, Debug)]
pub struct SpreadReduction {
    pub reduced: PointSet,
    pub map: SpreadReductionMap,
    pub bound: CrudeBound,
    pub log_spread: f64,
    pub warnings: Vec<String>,
}

/// Crude bound, diameter reduction and rounding in sequence.
pub fn reduce_spread(data: &PointSet, k: usize, power: Power, seed: u64) -> Result<SpreadReduction> {
    let bound = crude_approx(data, k, power, derive_seed(seed, 1))?;
    let (moved, mut map) = reduce_diameter(data, &bound, derive_seed(seed, 2))?;
    let log_spread = log_spread_estimate(data);
    let (reduced, g) = reduce_min_distance(&moved, &bound, log_spread)?;
    map.g = g;
    let mut warnings = Vec::new();
    if map.box_count() > k {
        warnings.push(format!("{} boxes for k = {k}; the diameter bound is weaker", map.box_count()));
    }
    Ok(SpreadReduction { reduced, map, bound, log_spread, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cost, sq_dist};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn crude_bound_two_points() {
        let big_d = 7.0;
        let p = line(&[0.0, big_d]);
        for seed in 0..20 {
            let b = crude_approx(&p, 1, Power::KMedian, seed).unwrap();
            // the best 1-median of two points costs exactly D
            assert!(b.upper >= big_d);
            assert!(b.upper <= 2.0 * 2.0 * big_d * 2.0, "{}", b.upper);
            let b2 = crude_approx(&p, 1, Power::KMeans, seed).unwrap();
            assert!(b2.upper >= big_d * big_d / 2.0);
            assert_eq!(b2.upper, 2.0 * b2.median_upper * b2.median_upper);
        }
    }

    #[test]
    fn crude_bound_needs_k_plus_one_distinct_points() {
        let p = line(&[1.0, 1.0, 2.0]);
        assert!(matches!(crude_approx(&p, 2, Power::KMeans, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn crude_approx_pass_count_is_logarithmic_in_levels() {
        // spread 2^64: two points at distance 1 and one far away
        let p = line(&[0.0, 1.0, 2f64.powi(64)]);
        let b = crude_approx(&p, 2, Power::KMedian, 3).unwrap();
        let bound = ((64.0f64 + 1.0).log2().ceil() as u32) + 2;
        assert!(b.passes <= bound, "{} passes", b.passes);
        assert!(b.upper >= 1.0);
    }

    #[test]
    fn single_box_is_identity() {
        let p = line(&[0.1, 0.2, 0.7]);
        let grid = GridConfig { cell_side: 1.0, shift: vec![0.0], seed: 0 };
        let (q, map) = reduce_diameter_on_grid(&p, &grid);
        assert_eq!(q, p);
        assert_eq!(map.box_count(), 1);
        assert!(map.box_translation.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn two_far_boxes_end_up_two_sides_apart() {
        let p = line(&[0.25, 0.5, 10.25, 10.75]);
        let grid = GridConfig { cell_side: 1.0, shift: vec![0.0], seed: 0 };
        let (q, map) = reduce_diameter_on_grid(&p, &grid);
        assert_eq!(map.box_count(), 2);
        assert_eq!(map.translation_of_box(1), &[8.0]);
        assert_eq!(q.as_slice(), &[0.25, 0.5, 2.25, 2.75]);
        assert_eq!(q.row(3)[0] - q.row(2)[0], p.row(3)[0] - p.row(2)[0]);
    }

    #[test]
    fn rounding_is_identity_on_grid_multiples() {
        let g = 0.125;
        let p = PointSet::new(2, vec![0.0, 0.125, -3.5, 100.0 * g]).unwrap();
        assert_eq!(round_to_grid(&p, g), p);
    }

    #[test]
    fn rounding_ties_go_up() {
        let p = line(&[0.5, -0.5, 1.5]);
        assert_eq!(round_to_grid(&p, 1.0).as_slice(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn rounding_grid_underflow_is_an_error() {
        let bound = CrudeBound { upper: 1e-300, median_upper: 1e-300, level: 0, power: Power::KMedian, passes: 1 };
        assert!(matches!(rounding_grid(1000, 10, &bound, 3.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn rounding_moves_points_little_and_changes_cost_little() {
        let mut rng = rng_from_seed(5);
        let p = PointSet::new(3, (0..300).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
        let g = 0.37;
        let q = round_to_grid(&p, g);
        for i in 0..p.n() {
            assert!(sq_dist(p.row(i), q.row(i)).sqrt() <= g * 3f64.sqrt() / 2.0 + 1e-12);
        }
        let sol = ClusteringSolution::new(
            PointSet::new(3, (0..9).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap(),
            Power::KMedian,
        );
        let diff = (cost(&p, &sol).unwrap() - cost(&q, &sol).unwrap()).abs();
        assert!(diff <= p.n() as f64 * g * 3f64.sqrt());
    }

    #[test]
    fn identity_map_keeps_solutions() {
        let map = SpreadReductionMap::identity(4, 2);
        let sol = ClusteringSolution::new(PointSet::from_rows(&[[1.0, 2.0], [-3.0, 4.0]]).unwrap(), Power::KMeans);
        assert_eq!(transfer_solution(&sol, &map, Direction::Backward).unwrap(), sol);
        assert_eq!(transfer_solution(&sol, &map, Direction::Forward).unwrap(), sol);
    }

    #[test]
    fn single_translated_box_shifts_centers() {
        let p = line(&[0.25, 0.5, 10.25, 10.75]);
        let grid = GridConfig { cell_side: 1.0, shift: vec![0.0], seed: 0 };
        let (_, map) = reduce_diameter_on_grid(&p, &grid);
        let sol = ClusteringSolution::new(line(&[2.5]), Power::KMeans);
        let back = transfer_solution(&sol, &map, Direction::Backward).unwrap();
        assert_eq!(back.centers.as_slice(), &[10.5]);
    }

    fn clustered(seed: u64) -> PointSet {
        let mut rng = rng_from_seed(seed);
        let mut v = Vec::new();
        for c in [0.0, 1e9, -3e12] {
            for _ in 0..10 {
                v.push(c + rng.random_range(0.0..1.0));
                v.push(rng.random_range(0.0..1.0) * 0.5 - c * 1e-3);
            }
        }
        PointSet::new(2, v).unwrap()
    }

    #[test]
    fn reduce_spread_pipeline_shrinks_far_clusters() {
        let p = clustered(1);
        let red = reduce_spread(&p, 3, Power::KMeans, 9).unwrap();
        assert!(red.map.g > 0.0);
        assert!(diameter_upper(&red.reduced) <= diameter_upper(&p));
        for i in 0..p.n() {
            for j in 0..i {
                if red.map.box_of_point[i] == red.map.box_of_point[j] {
                    let a = sq_dist(p.row(i), p.row(j)).sqrt();
                    let b = sq_dist(red.reduced.row(i), red.reduced.row(j)).sqrt();
                    assert!(
                        (a - b).abs() <= 2.0 * red.map.g * 2f64.sqrt() + 1e-9 * a,
                        "{a} {b} g={} r={} boxes={} i={i} j={j}",
                        red.map.g,
                        red.map.r,
                        red.map.box_count()
                    );
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn translation_preserves_boxes_and_extent(seed in 0u64..300, side in 0.5f64..5.0) {
            let mut rng = rng_from_seed(seed);
            let mut v = Vec::new();
            for _ in 0..30 {
                let far = if rng.random_bool(0.5) { rng.random_range(-1e4..1e4) } else { 0.0 };
                v.push(far + rng.random_range(0.0..1.0));
                v.push(rng.random_range(-50.0..50.0));
            }
            let p = PointSet::new(2, v).unwrap();
            let grid = GridConfig::random(2, side, seed);
            let (q, map) = reduce_diameter_on_grid(&p, &grid);
            let extent = |s: &PointSet, i: usize| {
                let vals: Vec<f64> = s.rows().map(|r| r[i]).collect();
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            for i in 0..2 {
                proptest::prop_assert!(extent(&q, i) <= extent(&p, i) + 1e-9);
            }
            for a in 0..p.n() {
                for b in 0..a {
                    if map.box_of_point[a] == map.box_of_point[b] {
                        for i in 0..2 {
                            let before = p.row(a)[i] - p.row(b)[i];
                            let after = q.row(a)[i] - q.row(b)[i];
                            proptest::prop_assert!((before - after).abs() <= 4.0 * f64::EPSILON * 1e4);
                        }
                    }
                }
            }
        }

        #[test]
        fn transfer_round_trip(seed in 0u64..300) {
            let p = clustered(seed);
            let red = reduce_spread(&p, 3, Power::KMeans, seed).unwrap();
            let idx = [0usize, 12, 25];
            let sol = ClusteringSolution::new(p.select(&idx), Power::KMeans);
            let there = transfer_solution(&sol, &red.map, Direction::Forward).unwrap();
            let back = transfer_solution(&there, &red.map, Direction::Backward).unwrap();
            for (a, b) in back.centers.as_slice().iter().zip(sol.centers.as_slice()) {
                proptest::prop_assert!((a - b).abs() <= 1e-15 * 4e12);
            }
        }
    }
}
