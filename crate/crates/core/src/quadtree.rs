//! Randomly shifted hierarchical grids: cell ids, distinct-cell counting, and the
//! per-level tree used by the tree-metric seeder.

use rand::Rng as _;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::model::PointSet;
use crate::par;
use crate::rng::rng_from_seed;

/// One level of a shifted grid: cells `[shift + c*side, shift + (c+1)*side)` per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub cell_side: f64,
    pub shift: Vec<f64>,
    pub seed: u64,
}

/// Integer coordinates of a grid cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub Vec<i64>);

impl GridConfig {
    /// Grid with an independent uniform shift in `[0, cell_side)` for every coordinate.
    pub fn random(d: usize, cell_side: f64, seed: u64) -> GridConfig {
        let mut rng = rng_from_seed(seed);
        let shift = (0..d).map(|_| rng.random::<f64>() * cell_side).collect();
        GridConfig { cell_side, shift, seed }
    }

    /// The same grid family refined (or coarsened) to another side; the shift is reduced
    /// modulo the new side, so cells at dyadic sides nest.
    pub fn with_side(&self, cell_side: f64) -> GridConfig {
        let shift = self.shift.iter().map(|s| s.rem_euclid(cell_side)).collect();
        GridConfig { cell_side, shift, seed: self.seed }
    }

    /// Same partition as [`GridConfig::with_side`], but keeps the original shift so that
    /// keys at dyadic sides nest exactly in floating point.
    pub(crate) fn nested(&self, cell_side: f64) -> GridConfig {
        GridConfig { cell_side, shift: self.shift.clone(), seed: self.seed }
    }

    pub fn cell_of(&self, p: &[f64]) -> CellId {
        let mut key = vec![0; p.len()];
        self.write_key(p, &mut key);
        CellId(key)
    }

    #[inline]
    pub(crate) fn write_key(&self, p: &[f64], out: &mut [i64]) {
        for ((o, x), s) in out.iter_mut().zip(p).zip(&self.shift) {
            *o = ((x - s) / self.cell_side).floor() as i64;
        }
    }

    /// Lower corner of a cell along coordinate `i`.
    pub fn cell_lower(&self, cell: &CellId, i: usize) -> f64 {
        self.shift[i] + cell.0[i] as f64 * self.cell_side
    }
}

fn all_keys(data: &PointSet, grid: &GridConfig) -> Vec<i64> {
    let d = data.d();
    let rows: Vec<Vec<i64>> = par::map_indices(data.n().div_ceil(par::CHUNK), |c| {
        let lo = c * par::CHUNK;
        let hi = (lo + par::CHUNK).min(data.n());
        let mut buf = vec![0i64; (hi - lo) * d];
        for i in lo..hi {
            grid.write_key(data.row(i), &mut buf[(i - lo) * d..(i - lo + 1) * d]);
        }
        buf
    });
    rows.concat()
}

/// Number of distinct occupied cells, counting stops as soon as `cap` is reached.
pub fn count_cells_capped(data: &PointSet, grid: &GridConfig, cap: usize) -> usize {
    let keys = all_keys(data, grid);
    let mut seen: FxHashSet<&[i64]> = FxHashSet::default();
    for key in keys.chunks_exact(data.d()) {
        seen.insert(key);
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

/// True iff the points occupy at least `threshold` distinct cells of `grid`.
pub fn count_distinct_cells(data: &PointSet, grid: &GridConfig, threshold: usize) -> bool {
    threshold == 0 || count_cells_capped(data, grid, threshold) >= threshold
}

/// Groups points by cell: returns the cell index of every point and the cells in order of
/// first occurrence.
pub fn group_by_cell(data: &PointSet, grid: &GridConfig) -> (Vec<u32>, Vec<CellId>) {
    let keys = all_keys(data, grid);
    let mut ids: FxHashMap<&[i64], u32> = FxHashMap::default();
    let mut cells = Vec::new();
    let mut of_point = Vec::with_capacity(data.n());
    for key in keys.chunks_exact(data.d()) {
        let next = ids.len() as u32;
        let id = *ids.entry(key).or_insert_with(|| {
            cells.push(CellId(key.to_vec()));
            next
        });
        of_point.push(id);
    }
    (of_point, cells)
}

/// Monte Carlo frequency with which a randomly shifted grid of side `r` separates `p` and `q`.
pub fn separation_probability_check(p: &[f64], q: &[f64], r: f64, trials: usize, seed: u64) -> f64 {
    assert_eq!(p.len(), q.len(), "points must share a dimension");
    let mut rng = rng_from_seed(seed);
    let mut split = 0usize;
    for _ in 0..trials {
        let mut separated = false;
        for (a, b) in p.iter().zip(q) {
            let s = rng.random::<f64>() * r;
            separated |= ((a - s) / r).floor() != ((b - s) / r).floor();
        }
        split += separated as usize;
    }
    split as f64 / trials.max(1) as f64
}

/// How many levels a [`LevelTree`] builds below its root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthPolicy {
    /// Refine until every cell holds copies of a single point (at most `cap` levels).
    Adaptive { cap: u32 },
    /// Exactly this many levels.
    Fixed(u32),
}

/// Finest level any tree is allowed to reach; keeps cell indices inside `i64`.
pub const MAX_TREE_LEVEL: u32 = 60;

/// Nested shifted grids over a point set. Points are stored in an order where every cell
/// of every level is a contiguous range.
#[derive(Clone, Debug)]
pub struct LevelTree {
    /// Side of level-0 cells.
    pub root_side: f64,
    pub grid: GridConfig,
    /// `order[pos]` is the point stored at position `pos`.
    pub order: Vec<u32>,
    /// Inverse of `order`.
    pub position: Vec<u32>,
    /// Per level, start positions of its cells followed by `n`.
    starts: Vec<Vec<u32>>,
}

impl LevelTree {
    /// Builds levels `0..=depth` with `root_side` at least the largest coordinate extent.
    pub fn build(data: &PointSet, policy: DepthPolicy, seed: u64) -> LevelTree {
        let n = data.n();
        let d = data.d();
        let extent = bounding_extent(data);
        let root_side = if extent > 0.0 { extent } else { 1.0 };
        let grid = GridConfig::random(d, root_side, seed);
        let (cap, fixed) = match policy {
            DepthPolicy::Adaptive { cap } => (cap.min(MAX_TREE_LEVEL), None),
            DepthPolicy::Fixed(l) => (l.min(MAX_TREE_LEVEL), Some(l.min(MAX_TREE_LEVEL))),
        };
        let distinct = if fixed.is_none() { data.distinct_count() } else { 0 };

        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut starts: Vec<Vec<u32>> = Vec::new();
        let mut key = vec![0i64; d];
        let mut keys = vec![0i64; n * d];
        let mut ids: Vec<u32> = vec![0; n];
        let mut counts: Vec<u32> = Vec::new();
        let mut scratch: Vec<u32> = vec![0; n];
        for level in 0..=cap {
            let g = grid.nested(root_side / 2f64.powi(level as i32));
            for (pos, &p) in order.iter().enumerate() {
                g.write_key(data.row(p as usize), &mut key);
                keys[pos * d..(pos + 1) * d].copy_from_slice(&key);
            }
            // ids in first-occurrence order along the previous level's order; children of
            // one parent therefore receive consecutive ids
            let mut map: FxHashMap<&[i64], u32> = FxHashMap::default();
            map.reserve(starts.last().map_or(1, |s| s.len()));
            for pos in 0..n {
                let next = map.len() as u32;
                ids[pos] = *map.entry(&keys[pos * d..(pos + 1) * d]).or_insert(next);
            }
            let cells = map.len();
            drop(map);
            counts.clear();
            counts.resize(cells + 1, 0);
            for &id in &ids {
                counts[id as usize + 1] += 1;
            }
            for c in 0..cells {
                counts[c + 1] += counts[c];
            }
            let level_starts = counts.clone();
            for pos in 0..n {
                let slot = &mut counts[ids[pos] as usize];
                scratch[*slot as usize] = order[pos];
                *slot += 1;
            }
            std::mem::swap(&mut order, &mut scratch);
            starts.push(level_starts);
            if fixed.is_none() && cells >= distinct {
                break;
            }
        }
        let mut position = vec![0u32; n];
        for (pos, &p) in order.iter().enumerate() {
            position[p as usize] = pos as u32;
        }
        LevelTree { root_side, grid, order, position, starts }
    }

    /// Index of the deepest level.
    pub fn depth(&self) -> u32 {
        (self.starts.len() - 1) as u32
    }

    pub fn cells_at(&self, level: u32) -> usize {
        self.starts[level as usize].len() - 1
    }

    pub fn level_grid(&self, level: u32) -> GridConfig {
        self.grid.nested(self.side(level as i32))
    }

    pub fn side(&self, level: i32) -> f64 {
        self.root_side / 2f64.powi(level)
    }

    /// Position range of the level-`level` cell holding the point stored at `pos`.
    pub fn range_at(&self, level: u32, pos: u32) -> (u32, u32) {
        let s = &self.starts[level as usize];
        let cell = s.partition_point(|&b| b <= pos) - 1;
        (s[cell], s[cell + 1])
    }
}

/// Largest coordinate extent of the bounding box.
pub fn bounding_extent(data: &PointSet) -> f64 {
    let d = data.d();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in data.rows() {
        for i in 0..d {
            lo[i] = lo[i].min(r[i]);
            hi[i] = hi[i].max(r[i]);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::collections::BTreeSet;

    fn brute_cells(data: &PointSet, grid: &GridConfig) -> usize {
        let mut set = BTreeSet::new();
        for r in data.rows() {
            let key: Vec<i64> =
                r.iter().zip(&grid.shift).map(|(x, s)| ((x - s) / grid.cell_side).floor() as i64).collect();
            set.insert(key);
        }
        set.len()
    }

    fn unit_square(n: usize, seed: u64) -> PointSet {
        let mut rng = rng_from_seed(seed);
        PointSet::new(2, (0..2 * n).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn identical_points_share_a_cell() {
        let p = PointSet::from_rows(&[[1.5, 2.5]; 6]).unwrap();
        for seed in 0..5 {
            let g = GridConfig::random(2, 0.3, seed);
            assert!(!count_distinct_cells(&p, &g, 2));
        }
    }

    #[test]
    fn far_apart_points_need_distinct_cells() {
        let k = 6;
        let rows: Vec<[f64; 2]> = (0..=k).map(|i| [10.0 * i as f64, -10.0 * i as f64]).collect();
        let p = PointSet::from_rows(&rows).unwrap();
        let g = GridConfig::random(2, 1.0, 3);
        assert!(count_distinct_cells(&p, &g, k + 1));
    }

    #[test]
    fn counts_match_exact_counter() {
        let p = unit_square(1000, 11);
        let g = GridConfig::random(2, 0.01, 5);
        let exact = brute_cells(&p, &g);
        assert_eq!(count_distinct_cells(&p, &g, 500), exact >= 500);
        assert_eq!(count_cells_capped(&p, &g, usize::MAX), exact);
    }

    #[test]
    fn shifts_stay_inside_one_cell() {
        let g = GridConfig::random(7, 2.5, 9);
        assert!(g.shift.iter().all(|s| (0.0..2.5).contains(s)));
        let h = g.with_side(0.1);
        assert!(h.shift.iter().all(|s| (0.0..0.1).contains(s)));
    }

    #[test]
    fn separation_of_identical_points_is_zero() {
        assert_eq!(separation_probability_check(&[0.3, 0.4], &[0.3, 0.4], 1.0, 1000, 1), 0.0);
    }

    #[test]
    fn separation_in_one_dimension_matches_distance_over_side() {
        let trials = 100_000;
        let f = separation_probability_check(&[0.2], &[0.7], 1.0, trials, 4);
        let sigma = (0.25f64 / trials as f64).sqrt();
        assert!((f - 0.5).abs() <= 3.0 * sigma, "frequency {f}");
    }

    #[test]
    fn tree_cells_are_contiguous_and_nested() {
        let p = unit_square(300, 2);
        let t = LevelTree::build(&p, DepthPolicy::Fixed(8), 7);
        assert_eq!(t.depth(), 8);
        for level in 0..=t.depth() {
            let g = t.level_grid(level);
            let mut pos = 0u32;
            while (pos as usize) < p.n() {
                let (a, b) = t.range_at(level, pos);
                assert_eq!(a, pos);
                let first = g.cell_of(p.row(t.order[a as usize] as usize));
                for q in a..b {
                    assert_eq!(g.cell_of(p.row(t.order[q as usize] as usize)), first);
                }
                if level > 0 {
                    let (pa, pb) = t.range_at(level - 1, pos);
                    assert!(pa <= a && b <= pb);
                }
                pos = b;
            }
            assert_eq!(t.cells_at(level), brute_cells(&p, &g));
        }
    }

    #[test]
    fn adaptive_tree_stops_once_points_are_separated() {
        let p = PointSet::from_rows(&[[0.0], [1.0], [1.0], [3.0]]).unwrap();
        let t = LevelTree::build(&p, DepthPolicy::Adaptive { cap: 60 }, 1);
        assert_eq!(t.cells_at(t.depth()), 3);
        assert!(t.depth() < 10);
        for i in 0..4 {
            assert_eq!(t.order[t.position[i] as usize] as usize, i);
        }
    }

    proptest::proptest! {
        #[test]
        fn cell_counts_never_grow_with_side(seed in 0u64..500, side in 0.001f64..0.5) {
            let p = unit_square(200, seed);
            let g = GridConfig::random(2, side, seed);
            let fine = count_cells_capped(&p, &g.with_side(side / 2.0), usize::MAX);
            let coarse = count_cells_capped(&p, &g, usize::MAX);
            proptest::prop_assert!(fine >= coarse);
        }
    }
}
