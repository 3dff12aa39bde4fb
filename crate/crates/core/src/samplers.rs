//! Coreset samplers: uniform, lightweight, welterweight, sensitivity sampling and the
//! Fast-Coreset pipeline.

use std::fmt;
use std::str::FromStr;
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
use std::time::Instant;
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
use web_time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dimred::{make_projection, project, target_dim};
use crate::error::{Error, Result};
use crate::model::{sq_dist, Assignment, Dataset, PointSet, Power, WeightedPointSet};
use crate::par;
use crate::quadtree::{DepthPolicy, MAX_TREE_LEVEL};
use crate::rng::{derive_seed, rng_from_seed, uniform_below};
use crate::seeding::{
    cluster_stats_with, d2_seed, tree_seed_with, AssignmentRule, ClusterStats, MedianMethod, TreeSeedOptions,
};
use crate::spread::reduce_spread;

/// Smallest weight a sampled point may carry.
pub const MIN_WEIGHT: f64 = 1e-12;
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SamplerKind {
    Uniform,
    Lightweight,
    /// Sensitivity sampling against a `j`-center D² solution; `None` means `ceil(log2 k)`.
    Welterweight {
        j: Option<usize>,
    },
    Sensitivity,
    FastCoreset,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::Lightweight => "lightweight",
            SamplerKind::Welterweight { .. } => "welterweight",
            SamplerKind::Sensitivity => "sensitivity",
            SamplerKind::FastCoreset => "fast-coreset",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::Welterweight { j: Some(j) } => write!(f, "welterweight(j={j})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => SamplerKind::Uniform,
            "lightweight" => SamplerKind::Lightweight,
            "welterweight" => SamplerKind::Welterweight { j: None },
            "sensitivity" => SamplerKind::Sensitivity,
            "fast-coreset" | "fast" => SamplerKind::FastCoreset,
            other => return Err(Error::invalid(format!("unknown sampler kind '{other}'"))),
        })
    }
}

/// How the final weights of a sensitivity sample are calibrated per cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Multiply each base weight by `(1+eps)|C_i| - |Ĉ_i|`.
    PaperLiteral,
    /// Rescale base weights so cluster `i` carries exactly `(1+eps)|C_i|`.
    #[default]
    Normalized,
}

impl FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(WeightMode::Normalized),
            "paper-literal" | "literal" => Ok(WeightMode::PaperLiteral),
            other => Err(Error::invalid(format!("unknown weight mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastCoresetOptions {
    pub use_dimred: bool,
    pub use_spread_reduction: bool,
    pub rule: AssignmentRule,
    pub median: MedianMethod,
}

impl Default for FastCoresetOptions {
    fn default() -> Self {
        FastCoresetOptions {
            use_dimred: false,
            use_spread_reduction: true,
            rule: AssignmentRule::EuclideanRecheck,
            median: MedianMethod::Weiszfeld,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub m: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub fast: FastCoresetOptions,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, m: usize, seed: u64) -> SamplerSpec {
        SamplerSpec {
            kind,
            m,
            epsilon: DEFAULT_EPSILON,
            seed,
            weight_mode: WeightMode::default(),
            fast: FastCoresetOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> SamplerSpec {
        self.seed = seed;
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("coreset size m must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if let SamplerKind::Welterweight { j: Some(j) } = self.kind {
            if j == 0 || j > k {
                return Err(Error::invalid(format!("welterweight j = {j} must lie in 1..={k}")));
            }
        }
        Ok(())
    }
}

/// `ceil(log2 k)`, at least 1.
pub fn default_j(k: usize) -> usize {
    (k.max(1) as f64).log2().ceil().max(1.0) as usize
}

/// Sampling scores of every point with the clustering they were derived from.
#[derive(Clone, Debug)]
pub struct ImportanceProfile {
    pub scores: Vec<f64>,
    pub assignment: Assignment,
    pub stats: ClusterStats,
    pub total: f64,
}

/// Scores `w_p (cost(p, c_i) / cost(C_i, c_i) + 1 / |C_i|)`, where `c_i` is the center
/// computed for `p`'s cluster. Clusters of zero cost only contribute `w_p / |C_i|`.
pub fn compute_sensitivities<D: Dataset + ?Sized>(
    data: &D,
    asg: &Assignment,
    stats: &ClusterStats,
) -> Result<ImportanceProfile> {
    let pts = data.points();
    if asg.len() != pts.n() {
        return Err(Error::invalid("assignment does not match the data"));
    }
    let power = stats.power;
    let mut clusters = Vec::with_capacity(stats.clusters.len());
    for (i, c) in stats.clusters.iter().enumerate() {
        clusters.push(c.as_ref().map(|c| (c, i)));
    }
    for &l in &asg.labels {
        if clusters.get(l).and_then(|c| c.as_ref()).is_none() {
            return Err(Error::invalid(format!("cluster {l} has points but no statistics")));
        }
    }
    let scores = par::map_indices(pts.n(), |p| {
        let (c, _) = clusters[asg.labels[p]].expect("checked above");
        let w = data.weight(p);
        if c.cost > 0.0 {
            w * (power.of_sq(sq_dist(pts.row(p), &c.center)) / c.cost + 1.0 / c.size)
        } else {
            w / c.size
        }
    });
    let total = par::sum_slice(&scores);
    Ok(ImportanceProfile { scores, assignment: asg.clone(), stats: stats.clone(), total })
}

/// A sampled coreset: indices into the source data, weights, and diagnostics.
#[derive(Clone, Debug)]
pub struct Sample {
    /// Ascending, without duplicates.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Clusters with points but no draws.
    pub unrepresented: Vec<usize>,
}

impl Sample {
    pub fn coreset_from(&self, points: &PointSet) -> Result<WeightedPointSet> {
        WeightedPointSet::new(points.select(&self.indices), self.weights.clone())
    }
}

fn merge_draws(draws: &[(usize, f64)]) -> (Vec<usize>, Vec<f64>) {
    let mut sorted = draws.to_vec();
    sorted.sort_by_key(|d| d.0);
    let mut indices: Vec<usize> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (i, w) in sorted {
        if indices.last() == Some(&i) {
            *weights.last_mut().unwrap() += w;
        } else {
            indices.push(i);
            weights.push(w);
        }
    }
    (indices, weights)
}

/// `m` independent draws proportional to the scores. Each draw carries its base weight
/// `w_p * total / (score_p * m)`, which makes `sum u(p) f(p)` an unbiased estimate of
/// `sum w_p f(p)` for any `f`.
pub fn draw_by_profile<D: Dataset + ?Sized>(
    data: &D,
    profile: &ImportanceProfile,
    m: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if m == 0 {
        return Err(Error::invalid("coreset size m must be at least 1"));
    }
    let n = profile.scores.len();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for s in &profile.scores {
        acc += s;
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = rng_from_seed(seed);
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        let u = uniform_below(&mut rng, total);
        let p = cumulative.partition_point(|&c| c <= u).min(n - 1);
        draws.push((p, data.weight(p) * total / (profile.scores[p] * m as f64)));
    }
    Ok(draws)
}

/// [`draw_by_profile`] followed by per-cluster calibration of the weights according to
/// `mode`.
pub fn sample_by_profile<D: Dataset + ?Sized>(
    data: &D,
    profile: &ImportanceProfile,
    m: usize,
    epsilon: f64,
    seed: u64,
    mode: WeightMode,
) -> Result<Sample> {
    let mut draws = draw_by_profile(data, profile, m, seed)?;
    let k = profile.stats.clusters.len();
    let mut estimated = vec![0.0; k];
    for &(p, base) in &draws {
        estimated[profile.assignment.labels[p]] += base;
    }
    let sizes: Vec<f64> = profile.stats.clusters.iter().map(|c| c.as_ref().map_or(0.0, |c| c.size)).collect();
    for d in draws.iter_mut() {
        let i = profile.assignment.labels[d.0];
        let target = (1.0 + epsilon) * sizes[i];
        d.1 = match mode {
            WeightMode::Normalized => d.1 * target / estimated[i],
            WeightMode::PaperLiteral => d.1 * (target - estimated[i]),
        }
        .max(MIN_WEIGHT);
    }
    let unrepresented = (0..k).filter(|&i| sizes[i] > 0.0 && estimated[i] == 0.0).collect::<Vec<_>>();
    let (indices, weights) = merge_draws(&draws);
    Ok(Sample { indices, weights, unrepresented })
}

/// [`sample_by_profile`] returning the weighted points.
pub fn sensitivity_sample<D: Dataset + ?Sized>(
    data: &D,
    profile: &ImportanceProfile,
    m: usize,
    epsilon: f64,
    seed: u64,
    mode: WeightMode,
) -> Result<WeightedPointSet> {
    sample_by_profile(data, profile, m, epsilon, seed, mode)?.coreset_from(data.points())
}

/// `m` distinct points chosen uniformly, each weighted `n / m`.
pub fn uniform_sample(data: &PointSet, m: usize, seed: u64) -> Result<WeightedPointSet> {
    uniform_indices(data, m, seed)?.coreset_from(data)
}

fn uniform_indices<D: Dataset + ?Sized>(data: &D, m: usize, seed: u64) -> Result<Sample> {
    let n = data.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("uniform sample size {m} must lie in 1..={n}")));
    }
    let total = data.total_weight();
    let mut rng = rng_from_seed(seed);
    let equal = match data.weights() {
        None => true,
        Some(w) => w.iter().all(|x| *x == w[0]),
    };
    if equal {
        let mut indices = index::sample(&mut rng, n, m).into_vec();
        indices.sort_unstable();
        return Ok(Sample { weights: vec![total / m as f64; m], indices, unrepresented: vec![] });
    }
    // unequal input weights: draw proportionally to weight so the estimator stays unbiased
    let weights = data.weights().expect("unequal weights exist");
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let draws: Vec<(usize, f64)> = (0..m)
        .map(|_| {
            let u = uniform_below(&mut rng, acc);
            (cumulative.partition_point(|&c| c <= u).min(n - 1), total / m as f64)
        })
        .collect();
    let (indices, weights) = merge_draws(&draws);
    Ok(Sample { indices, weights, unrepresented: vec![] })
}

/// Sensitivity sampling with respect to the single cluster of all points.
pub fn lightweight_sample<D: Dataset + ?Sized>(
    data: &D,
    m: usize,
    power: Power,
    epsilon: f64,
    seed: u64,
    mode: WeightMode,
) -> Result<WeightedPointSet> {
    let asg = Assignment { labels: vec![0; data.len()], distances: vec![0.0; data.len()] };
    let stats = cluster_stats_with(data, &asg, power, MedianMethod::Weiszfeld)?;
    let profile = compute_sensitivities(data, &asg, &stats)?;
    sensitivity_sample(data, &profile, m, epsilon, seed, mode)
}

/// Sensitivity sampling with respect to a `j`-center D² solution.
pub fn welterweight_sample<D: Dataset + ?Sized>(
    data: &D,
    j: usize,
    m: usize,
    power: Power,
    epsilon: f64,
    seed: u64,
    mode: WeightMode,
) -> Result<WeightedPointSet> {
    let spec = SamplerSpec {
        kind: SamplerKind::Welterweight { j: Some(j) },
        m,
        epsilon,
        seed,
        weight_mode: mode,
        fast: FastCoresetOptions::default(),
    };
    Ok(build_coreset(data, j, power, &spec)?.coreset)
}

/// Timings and diagnostics of one coreset construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sampler: String,
    /// Seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
    pub coreset_size: usize,
    pub clusters: usize,
    pub box_count: Option<usize>,
    pub crude_level: Option<i32>,
    pub crude_passes: Option<u32>,
    pub rounding_grid: Option<f64>,
    pub tree_depth: Option<u32>,
    pub target_dim: Option<usize>,
    pub unrepresented_clusters: Vec<usize>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> f64 {
        self.stages.iter().filter(|s| s.0 == name).map(|s| s.1).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

#[derive(Clone, Debug)]
pub struct CoresetOutput {
    pub coreset: WeightedPointSet,
    pub report: RunReport,
}

/// Builds a coreset of `data` for `k` clusters according to `spec`.
pub fn build_coreset<D: Dataset + ?Sized>(
    data: &D,
    k: usize,
    power: Power,
    spec: &SamplerSpec,
) -> Result<CoresetOutput> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    spec.validate(k)?;
    let mut report = RunReport { sampler: spec.kind.to_string(), ..Default::default() };
    if spec.m < k {
        report.warnings.push(format!("coreset size m = {} is below k = {k}", spec.m));
    }
    let sample_seed = derive_seed(spec.seed, 0x5A);
    let sample = match spec.kind {
        SamplerKind::Uniform => {
            if spec.m >= data.len() {
                report.warnings.push("m covers the whole input; returned it unchanged".into());
                report.coreset_size = data.len();
                let coreset = match data.weights() {
                    Some(w) => WeightedPointSet::new(data.points().clone(), w.to_vec())?,
                    None => WeightedPointSet::unit(data.points().clone()),
                };
                return Ok(CoresetOutput { coreset, report });
            }
            report.time("sampling", || uniform_indices(data, spec.m, sample_seed))?
        }
        SamplerKind::Lightweight => {
            let asg = Assignment { labels: vec![0; data.len()], distances: vec![0.0; data.len()] };
            profile_and_sample(data, asg, power, spec, &mut report)?
        }
        SamplerKind::Welterweight { j } => {
            let j = j.unwrap_or_else(|| default_j(k)).min(k);
            seeded_sample(data, j, power, spec, &mut report)?
        }
        SamplerKind::Sensitivity => seeded_sample(data, k, power, spec, &mut report)?,
        SamplerKind::FastCoreset => fast_sample(data, k, power, spec, &mut report)?,
    };
    report.unrepresented_clusters = sample.unrepresented.clone();
    if !sample.unrepresented.is_empty() {
        report.warnings.push(format!("{} clusters received no samples", sample.unrepresented.len()));
    }
    let coreset = sample.coreset_from(data.points())?;
    report.coreset_size = coreset.len();
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(CoresetOutput { coreset, report })
}

fn seeded_sample<D: Dataset + ?Sized>(
    data: &D,
    j: usize,
    power: Power,
    spec: &SamplerSpec,
    report: &mut RunReport,
) -> Result<Sample> {
    let distinct = data.points().distinct_count_at_least(j);
    if distinct < j {
        report.warnings.push(format!("only {distinct} distinct points; seeding {distinct} centers"));
    }
    let seeding = report.time("seeding", || d2_seed(data, j.min(distinct), power, derive_seed(spec.seed, 0x5E)))?;
    profile_and_sample(data, seeding.assignment, power, spec, report)
}

fn profile_and_sample<D: Dataset + ?Sized>(
    data: &D,
    asg: Assignment,
    power: Power,
    spec: &SamplerSpec,
    report: &mut RunReport,
) -> Result<Sample> {
    let profile = report.time("sensitivity", || -> Result<ImportanceProfile> {
        let stats = cluster_stats_with(data, &asg, power, spec.fast.median)?;
        compute_sensitivities(data, &asg, &stats)
    })?;
    report.clusters = profile.stats.clusters.iter().flatten().count();
    report.warnings.extend(profile.stats.warnings.iter().cloned());
    report.time("sampling", || {
        sample_by_profile(data, &profile, spec.m, spec.epsilon, derive_seed(spec.seed, 0x5A), spec.weight_mode)
    })
}

/// Spread reduction (optional), projection (optional), tree seeding on the working copy,
/// then statistics, sensitivities and sampling on the original points.
fn fast_sample<D: Dataset + ?Sized>(
    data: &D,
    k: usize,
    power: Power,
    spec: &SamplerSpec,
    report: &mut RunReport,
) -> Result<Sample> {
    let pts = data.points();
    let opts = spec.fast;
    let mut working: Option<PointSet> = None;
    let mut depth = DepthPolicy::Adaptive { cap: MAX_TREE_LEVEL };
    if opts.use_spread_reduction {
        if pts.distinct_count_at_least(k + 1) < k + 1 {
            report.warnings.push("fewer than k + 1 distinct points; spread reduction skipped".into());
        } else {
            let red = report.time("spread-reduction", || reduce_spread(pts, k, power, derive_seed(spec.seed, 0x5B)))?;
            report.box_count = Some(red.map.box_count());
            report.crude_level = Some(red.bound.level);
            report.crude_passes = Some(red.bound.passes);
            report.rounding_grid = Some(red.map.g);
            report.warnings.extend(red.warnings.iter().cloned());
            // the reduced instance has a known spread bound; the tree is built to it
            let levels = (crate::model::diameter_upper(&red.reduced) / red.map.g).log2().ceil();
            depth = DepthPolicy::Fixed((levels.max(1.0) as u32).min(MAX_TREE_LEVEL));
            working = Some(red.reduced);
        }
    }
    if opts.use_dimred {
        let t = target_dim(pts.d(), k);
        if pts.d() > t {
            let src = working.as_ref().unwrap_or(pts);
            let projected = report.time("dimred", || -> Result<PointSet> {
                let op = make_projection(pts.d(), k, derive_seed(spec.seed, 0x5C))?;
                project(src, &op)
            })?;
            report.target_dim = Some(t);
            working = Some(projected);
        }
    }
    let tree_opts = TreeSeedOptions { depth, rule: opts.rule };
    let seed = derive_seed(spec.seed, 0x5E);
    let seeding = report.time("seeding", || match (&working, data.weights()) {
        (None, _) => tree_seed_with(data, k, power, seed, &tree_opts),
        (Some(w), None) => tree_seed_with(w, k, power, seed, &tree_opts),
        (Some(w), Some(weights)) => {
            let weighted = WeightedPointSet::new(w.clone(), weights.to_vec())?;
            tree_seed_with(&weighted, k, power, seed, &tree_opts)
        }
    })?;
    report.tree_depth = seeding.tree_depth;
    if seeding.solution.k() < k {
        report.warnings.push(format!("tree seeding found only {} centers", seeding.solution.k()));
    }
    // distances in the assignment refer to the working copy; statistics use the originals
    profile_and_sample(data, seeding.assignment, power, spec, report)
}
