//! Seeding and refinement: weighted D² sampling, the tree-metric seeder, per-cluster
//! 1-means/1-medians, and weighted Lloyd iterations.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{assign, sq_dist, Assignment, ClusteringSolution, Dataset, PointSet, Power};
use crate::par;
use crate::quadtree::{DepthPolicy, LevelTree, MAX_TREE_LEVEL};
use crate::rng::{rng_from_seed, uniform_below, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeederKind {
    D2Seeding,
    TreeSeeding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeederChoice {
    pub kind: SeederKind,
    pub seed: u64,
}

/// How the tree seeder labels points once its centers are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentRule {
    /// Each point keeps the center it was attached to in the tree (no extra pass).
    /// Cheap, but a cluster cut by a grid line can end up attached to a far center.
    TreeDistance,
    /// Re-assign every point to its Euclidean nearest center, `O(nkd)`.
    #[default]
    EuclideanRecheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSeedOptions {
    pub depth: DepthPolicy,
    pub rule: AssignmentRule,
}

impl Default for TreeSeedOptions {
    fn default() -> Self {
        TreeSeedOptions { depth: DepthPolicy::Adaptive { cap: MAX_TREE_LEVEL }, rule: AssignmentRule::EuclideanRecheck }
    }
}

/// Centers chosen by a seeder together with the point labels it produced.
#[derive(Clone, Debug)]
pub struct Seeding {
    pub solution: ClusteringSolution,
    pub assignment: Assignment,
    /// Data indices of the chosen centers.
    pub center_indices: Vec<usize>,
    /// Deepest tree level, for the tree seeder.
    pub tree_depth: Option<u32>,
}

fn pick_by_weight(rng: &mut Rng, weights: &[f64], total: f64) -> usize {
    let mut u = uniform_below(rng, total);
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last_positive = i;
        }
    }
    last_positive
}

/// k-means++ style seeding: each new center is drawn with probability proportional to
/// `w_p * dist(p, C)^z`. Runs in `O(nkd)`.
pub fn d2_seed<D: Dataset + ?Sized>(data: &D, k: usize, power: Power, seed: u64) -> Result<Seeding> {
    let pts = data.points();
    let n = pts.n();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let distinct = pts.distinct_count_at_least(k);
    if distinct < k {
        return Err(Error::invalid(format!("k = {k} exceeds the {distinct} distinct points")));
    }
    let mut rng = rng_from_seed(seed);
    let weights: Vec<f64> = (0..n).map(|i| data.weight(i)).collect();
    let first = pick_by_weight(&mut rng, &weights, par::sum_slice(&weights));
    let mut centers = vec![first];
    let mut state: Vec<(u32, f64)> = par::map_indices(n, |i| (0, sq_dist(pts.row(i), pts.row(first))));
    let mut scores = vec![0.0; n];
    while centers.len() < k {
        par::for_each_mut(&mut scores, |i, s| *s = weights[i] * power.of_sq(state[i].1));
        let total = par::sum_slice(&scores);
        if total <= 0.0 {
            break;
        }
        let c = pick_by_weight(&mut rng, &scores, total);
        let label = centers.len() as u32;
        centers.push(c);
        let cr = pts.row(c);
        par::for_each_mut(&mut state, |i, st| {
            let sq = sq_dist(pts.row(i), cr);
            if sq < st.1 {
                *st = (label, sq);
            }
        });
    }
    let assignment = Assignment {
        labels: state.iter().map(|s| s.0 as usize).collect(),
        distances: state.iter().map(|s| s.1.sqrt()).collect(),
    };
    Ok(Seeding {
        solution: ClusteringSolution::new(pts.select(&centers), power),
        assignment,
        center_indices: centers,
        tree_depth: None,
    })
}

/// Sum tree over non-negative values; every update recomputes its path, so totals never
/// drift.
struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> SumTree {
        let size = values.len().next_power_of_two();
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { size, nodes }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut j = i + self.size;
        self.nodes[j] = v;
        while j > 1 {
            j /= 2;
            self.nodes[j] = self.nodes[2 * j] + self.nodes[2 * j + 1];
        }
    }

    fn find(&self, mut u: f64) -> usize {
        let mut j = 1;
        while j < self.size {
            let left = self.nodes[2 * j];
            if u < left || self.nodes[2 * j + 1] <= 0.0 {
                j *= 2;
            } else {
                u -= left;
                j = 2 * j + 1;
            }
        }
        j - self.size
    }
}

/// Tree-metric D² seeding with the default options.
pub fn tree_seed<D: Dataset + ?Sized>(data: &D, k: usize, power: Power, seed: u64) -> Result<Seeding> {
    tree_seed_with(data, k, power, seed, &TreeSeedOptions::default())
}

/// D² sampling where distances are measured in the tree metric of a randomly shifted
/// quadtree: a point at deepest common level `l` with its nearest center is at distance
/// `sqrt(d) * side(l)`. Each new center only touches the points whose tree distance it
/// shortens, so the total work is `O(nd * depth)` plus logarithmic sampling overhead.
///
/// Returns fewer than `k` centers when every point already has tree distance 0.
pub fn tree_seed_with<D: Dataset + ?Sized>(
    data: &D,
    k: usize,
    power: Power,
    seed: u64,
    options: &TreeSeedOptions,
) -> Result<Seeding> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let pts = data.points();
    let n = pts.n();
    let tree = LevelTree::build(pts, options.depth, crate::rng::derive_seed(seed, 0x7EE));
    let depth = tree.depth() as i32;
    let sqrt_d = (pts.d() as f64).sqrt();
    let tdist = |lev: i32| -> f64 {
        if lev >= depth {
            0.0
        } else if lev < 0 {
            sqrt_d * 2.0 * tree.root_side
        } else {
            sqrt_d * tree.side(lev)
        }
    };
    let score = |p: usize, lev: i32| data.weight(p) * power.of_dist(tdist(lev));

    // position-indexed state
    let mut lev: Vec<i32> = vec![-1; n];
    let mut label: Vec<u32> = vec![0; n];
    let init: Vec<f64> = tree.order.iter().map(|&p| score(p as usize, -1)).collect();
    let mut sampler = SumTree::new(&init);
    let mut rng = rng_from_seed(seed);
    let mut centers: Vec<usize> = Vec::with_capacity(k);

    while centers.len() < k {
        let total = sampler.total();
        if !(total > 0.0) {
            break;
        }
        let pos = sampler.find(uniform_below(&mut rng, total)) as u32;
        let c = tree.order[pos as usize] as usize;
        let id = centers.len() as u32;
        centers.push(c);
        let from = lev[pos as usize] + 1;
        let mut inner = (pos, pos);
        for level in (from..=depth).rev() {
            let (a, b) = tree.range_at(level as u32, pos);
            for q in (a..inner.0).chain(inner.1..b) {
                let q = q as usize;
                lev[q] = level;
                label[q] = id;
                sampler.set(q, score(tree.order[q] as usize, level));
            }
            inner = (a, b);
        }
    }

    let solution = ClusteringSolution::new(pts.select(&centers), power);
    let assignment = match options.rule {
        AssignmentRule::EuclideanRecheck => assign(pts, &solution)?,
        AssignmentRule::TreeDistance => {
            let mut labels = vec![0usize; n];
            for (pos, &p) in tree.order.iter().enumerate() {
                labels[p as usize] = label[pos] as usize;
            }
            let distances = par::map_indices(n, |i| sq_dist(pts.row(i), solution.centers.row(labels[i])).sqrt());
            Assignment { labels, distances }
        }
    };
    Ok(Seeding { solution, assignment, center_indices: centers, tree_depth: Some(tree.depth()) })
}

/// Size (total weight), cost and center of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub size: f64,
    pub cost: f64,
    pub center: Vec<f64>,
}

/// Per-cluster statistics indexed by assignment label; `None` marks an empty cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub clusters: Vec<Option<ClusterStat>>,
    pub power: Power,
    pub warnings: Vec<String>,
}

impl ClusterStats {
    pub fn total_size(&self) -> f64 {
        self.clusters.iter().flatten().map(|c| c.size).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.clusters.iter().flatten().map(|c| c.cost).sum()
    }

    /// Centers of the non-empty clusters, in label order.
    pub fn solution(&self, d: usize) -> ClusteringSolution {
        let data: Vec<f64> = self.clusters.iter().flatten().flat_map(|c| c.center.iter().copied()).collect();
        ClusteringSolution::new(PointSet::from_raw(d, data), self.power)
    }
}

/// How 1-medians are computed for `z = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum MedianMethod {
    /// Weiszfeld iterations to convergence.
    #[default]
    Weiszfeld,
    /// A member drawn with probability proportional to weight: a 2-approximation in
    /// expectation, in constant time per cluster.
    Sampled { seed: u64 },
}

pub const WEISZFELD_TOL: f64 = 1e-7;
pub const WEISZFELD_MAX_ITERS: usize = 200;

/// Weighted geometric median of `members` (indices into `pts`) by Weiszfeld's iteration,
/// with the Vardi-Zhang step when an iterate lands on a data point. Returns the median
/// and the objective after every iteration.
pub fn weiszfeld<D: Dataset + ?Sized>(
    data: &D,
    members: &[usize],
    start: &[f64],
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, Vec<f64>) {
    let pts = data.points();
    let d = pts.d();
    let objective =
        |y: &[f64]| -> f64 { members.iter().map(|&i| data.weight(i) * sq_dist(pts.row(i), y).sqrt()).sum() };
    let total_w: f64 = members.iter().map(|&i| data.weight(i)).sum();
    let mut y = start.to_vec();
    let mut obj = objective(&y);
    let mut trace = vec![obj];
    let mut num = vec![0.0; d];
    let mut resid = vec![0.0; d];
    for _ in 0..max_iters {
        num.iter_mut().for_each(|v| *v = 0.0);
        resid.iter_mut().for_each(|v| *v = 0.0);
        let mut den = 0.0;
        let mut eta = 0.0;
        for &i in members {
            let p = pts.row(i);
            let dist = sq_dist(p, &y).sqrt();
            let w = data.weight(i);
            if dist == 0.0 {
                eta += w;
                continue;
            }
            for t in 0..d {
                num[t] += w * p[t] / dist;
                resid[t] += w * (p[t] - y[t]) / dist;
            }
            den += w / dist;
        }
        if den == 0.0 {
            break;
        }
        let mut next: Vec<f64> = num.iter().map(|v| v / den).collect();
        if eta > 0.0 {
            let r = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= eta {
                break;
            }
            let beta = eta / r;
            for t in 0..d {
                next[t] = (1.0 - beta) * next[t] + beta * y[t];
            }
        }
        let next_obj = objective(&next);
        if next_obj > obj {
            break;
        }
        let moved = sq_dist(&next, &y).sqrt();
        y = next;
        obj = next_obj;
        trace.push(obj);
        let scale = obj / total_w;
        if moved <= tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (y, trace)
}

/// Centers, sizes and costs of the clusters induced by `asg`.
pub fn cluster_stats<D: Dataset + ?Sized>(data: &D, asg: &Assignment, power: Power) -> Result<ClusterStats> {
    cluster_stats_with(data, asg, power, MedianMethod::Weiszfeld)
}

pub fn cluster_stats_with<D: Dataset + ?Sized>(
    data: &D,
    asg: &Assignment,
    power: Power,
    median: MedianMethod,
) -> Result<ClusterStats> {
    let pts = data.points();
    if asg.len() != pts.n() {
        return Err(Error::invalid(format!("assignment has {} labels for {} points", asg.len(), pts.n())));
    }
    let d = pts.d();
    let k = asg.num_labels();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in asg.labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut warnings = Vec::new();
    let mut rng = match median {
        MedianMethod::Sampled { seed } => Some(rng_from_seed(seed)),
        MedianMethod::Weiszfeld => None,
    };
    let mut clusters = Vec::with_capacity(k);
    for (label, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            warnings.push(format!("cluster {label} is empty"));
            clusters.push(None);
            continue;
        }
        let size: f64 = idx.iter().map(|&i| data.weight(i)).sum();
        let mut mean = vec![0.0; d];
        for &i in idx {
            let w = data.weight(i);
            for (m, x) in mean.iter_mut().zip(pts.row(i)) {
                *m += w * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= size);
        let center = match (power, rng.as_mut()) {
            (Power::KMeans, _) => mean,
            (Power::KMedian, None) => weiszfeld(data, idx, &mean, WEISZFELD_TOL, WEISZFELD_MAX_ITERS).0,
            (Power::KMedian, Some(rng)) => {
                let w: Vec<f64> = idx.iter().map(|&i| data.weight(i)).collect();
                pts.row(idx[pick_by_weight(rng, &w, size)]).to_vec()
            }
        };
        let cost = idx.iter().map(|&i| data.weight(i) * power.of_sq(sq_dist(pts.row(i), &center))).sum();
        clusters.push(Some(ClusterStat { size, cost, center }));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ClusterStats { clusters, power, warnings })
}

/// Result of [`lloyd_refine_traced`].
#[derive(Clone, Debug)]
pub struct LloydOutcome {
    pub solution: ClusteringSolution,
    /// Cost before the first step and after every accepted step; non-increasing.
    pub costs: Vec<f64>,
    pub iterations: usize,
}

pub const LLOYD_TOL: f64 = 1e-4;
pub const LLOYD_MAX_ITERS: usize = 100;

pub fn lloyd_refine<D: Dataset + ?Sized>(
    data: &D,
    init: &ClusteringSolution,
    max_iters: usize,
    tol: f64,
) -> Result<ClusteringSolution> {
    Ok(lloyd_refine_traced(data, init, max_iters, tol)?.solution)
}

/// Alternates assignment and re-centering (means for `z = 2`, Weiszfeld medians started
/// at the previous center for `z = 1`) until the relative improvement drops to `tol`.
/// Empty clusters are re-seeded at the points farthest from their centers.
pub fn lloyd_refine_traced<D: Dataset + ?Sized>(
    data: &D,
    init: &ClusteringSolution,
    max_iters: usize,
    tol: f64,
) -> Result<LloydOutcome> {
    let pts = data.points();
    check_dim(init.d(), pts.d())?;
    let power = init.power;
    let d = pts.d();
    let k = init.k();
    let mut centers = init.centers.clone();
    let mut asg = assign(pts, &ClusteringSolution::new(centers.clone(), power))?;
    let mut current = crate::model::assignment_cost(data, &asg, power);
    let mut costs = vec![current];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in asg.labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut next = Vec::with_capacity(k * d);
        let mut empties = Vec::new();
        for (j, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                empties.push(j);
                next.extend_from_slice(centers.row(j));
                continue;
            }
            let center = match power {
                Power::KMeans => {
                    let mut mean = vec![0.0; d];
                    let mut size = 0.0;
                    for &i in idx {
                        let w = data.weight(i);
                        size += w;
                        for (m, x) in mean.iter_mut().zip(pts.row(i)) {
                            *m += w * x;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= size);
                    mean
                }
                Power::KMedian => weiszfeld(data, idx, centers.row(j), WEISZFELD_TOL, WEISZFELD_MAX_ITERS).0,
            };
            next.extend_from_slice(&center);
        }
        if !empties.is_empty() {
            let mut by_distance: Vec<usize> = (0..pts.n()).collect();
            by_distance.sort_by(|&a, &b| asg.distances[b].total_cmp(&asg.distances[a]).then(a.cmp(&b)));
            for (slot, &j) in empties.iter().enumerate() {
                if let Some(&p) = by_distance.get(slot) {
                    next[j * d..(j + 1) * d].copy_from_slice(pts.row(p));
                }
            }
        }
        let candidate = PointSet::from_raw(d, next);
        let new_asg = assign(pts, &ClusteringSolution::new(candidate.clone(), power))?;
        let new_cost = crate::model::assignment_cost(data, &new_asg, power);
        if new_cost > current {
            break;
        }
        let improvement = current - new_cost;
        centers = candidate;
        asg = new_asg;
        current = new_cost;
        costs.push(current);
        if improvement <= tol * current {
            break;
        }
    }
    Ok(LloydOutcome { solution: ClusteringSolution::new(centers, power), costs, iterations })
}

/// Seeds with [`d2_seed`] and refines with Lloyd; the solver behind the distortion metric.
pub fn solve<D: Dataset + ?Sized>(data: &D, k: usize, power: Power, seed: u64) -> Result<ClusteringSolution> {
    let distinct = data.points().distinct_count_at_least(k);
    let seeding = d2_seed(data, k.min(distinct), power, seed)?;
    lloyd_refine(data, &seeding.solution, LLOYD_MAX_ITERS, LLOYD_TOL)
}
