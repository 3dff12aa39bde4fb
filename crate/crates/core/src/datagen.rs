//! Synthetic datasets: c-outlier, geometric, Gaussian mixture, benchmark and the
//! log-spread hardness instance, plus uniform noise injection.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_NOISE: f64 = 1e-3;
/// Distance of the outliers in [`gen_c_outlier`].
pub const OUTLIER_DISTANCE: f64 = 1e6;

/// Adds i.i.d. uniform `[0, amplitude]` noise to every coordinate.
pub fn add_noise(data: &PointSet, amplitude: f64, seed: u64) -> Result<PointSet> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid(format!("noise amplitude must be finite and >= 0, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = rng_from_seed(seed);
    let v = data.as_slice().iter().map(|x| x + rng.random::<f64>() * amplitude).collect();
    PointSet::new(data.d(), v)
}

/// `n - c` points at the origin and `c` points at distance `1e6` along the first axis.
pub fn gen_c_outlier(n: usize, c: usize, d: usize, noise: f64, seed: u64) -> Result<PointSet> {
    if c == 0 || c >= n || d == 0 {
        return Err(Error::invalid(format!("c-outlier needs 1 <= c < n and d >= 1 (n={n}, c={c}, d={d})")));
    }
    let mut v = vec![0.0; n * d];
    for i in n - c..n {
        v[i * d] = OUTLIER_DISTANCE;
    }
    add_noise(&PointSet::new(d, v)?, noise, seed)
}

/// Group sizes `floor(ck / r^i)` (at least 1) for every round `i` with `ck / r^i >= 1`.
pub fn geometric_sizes(k: usize, c: usize, r: f64) -> Result<Vec<usize>> {
    if !(r > 1.0) || k == 0 || c == 0 {
        return Err(Error::invalid("geometric data needs k, c >= 1 and r > 1"));
    }
    let total = (c * k) as f64;
    let mut sizes = Vec::new();
    let mut scale = 1.0;
    while total / scale >= 1.0 {
        sizes.push(((total / scale).floor() as usize).max(1));
        scale *= r;
    }
    Ok(sizes)
}

/// Groups of geometrically decaying size on the standard basis vectors `e_1, e_2, ...`.
pub fn gen_geometric(k: usize, c: usize, r: f64, d: usize, noise: f64, seed: u64) -> Result<PointSet> {
    let sizes = geometric_sizes(k, c, r)?;
    if d < sizes.len() {
        return Err(Error::invalid(format!("geometric data needs d >= {} rounds, got d = {d}", sizes.len())));
    }
    let n: usize = sizes.iter().sum();
    let mut v = vec![0.0; n * d];
    let mut row = 0;
    for (axis, &s) in sizes.iter().enumerate() {
        for _ in 0..s {
            v[row * d + axis] = 1.0;
            row += 1;
        }
    }
    add_noise(&PointSet::new(d, v)?, noise, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureParams {
    pub n: usize,
    pub kappa: usize,
    pub gamma: f64,
    pub d: usize,
    pub cluster_std: f64,
    pub box_side: f64,
    pub noise: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams {
            n: 50_000,
            kappa: 100,
            gamma: 0.0,
            d: 50,
            cluster_std: 1.0,
            box_side: 100.0,
            noise: DEFAULT_NOISE,
        }
    }
}

/// Cluster sizes from the sequential rule
/// `|c_{i+1}| = (n - sum_{j<=i} |c_j|) / (kappa - i) * exp(gamma * rho_{i+1})`,
/// rounded, clamped to at least 1 while leaving one point for each later cluster; the last
/// cluster takes the remainder.
pub fn mixture_sizes(n: usize, gamma: f64, rhos: &[f64]) -> Result<Vec<usize>> {
    let kappa = rhos.len();
    if kappa == 0 || n < kappa {
        return Err(Error::invalid(format!("need 1 <= kappa <= n (n={n}, kappa={kappa})")));
    }
    let mut sizes = Vec::with_capacity(kappa);
    let mut used = 0usize;
    for (i, rho) in rhos.iter().enumerate() {
        let remaining = n - used;
        let later = kappa - i - 1;
        let size = if later == 0 {
            remaining
        } else {
            let raw = (remaining as f64 / (kappa - i) as f64 * (gamma * rho).exp()).round();
            let clamped = raw.clamp(1.0, (remaining - later) as f64) as usize;
            if clamped as f64 != raw {
                log::debug!("mixture cluster {i}: size {raw} clamped to {clamped}");
            }
            clamped
        };
        sizes.push(size);
        used += size;
    }
    Ok(sizes)
}

/// Isotropic Gaussian clusters with imbalanced sizes and centers uniform in a box.
pub fn gen_gaussian_mixture(params: &MixtureParams, seed: u64) -> Result<(PointSet, Vec<usize>)> {
    let MixtureParams { n, kappa, gamma, d, cluster_std, box_side, noise } = *params;
    if d == 0 || kappa == 0 {
        return Err(Error::invalid("mixture needs d >= 1 and kappa >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let rhos: Vec<f64> = (0..kappa).map(|_| rng.random::<f64>() - 0.5).collect();
    let sizes = mixture_sizes(n, gamma, &rhos)?;
    let centers: Vec<f64> = (0..kappa * d).map(|_| rng.random::<f64>() * box_side).collect();
    let mut v = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, &s) in sizes.iter().enumerate() {
        for _ in 0..s {
            for t in 0..d {
                let g: f64 = StandardNormal.sample(&mut rng);
                v.push(centers[c * d + t] + cluster_std * g);
            }
            labels.push(c);
        }
    }
    let points = add_noise(&PointSet::new(d, v)?, noise, derive_seed(seed, 1))?;
    Ok((points, labels))
}

/// Appends `size` Gaussian points (standard deviation `std`) around the global mean,
/// labelled one past the largest existing label.
pub fn plant_cluster_at_mean(
    data: &PointSet,
    labels: &[usize],
    size: usize,
    std: f64,
    seed: u64,
) -> Result<(PointSet, Vec<usize>)> {
    let d = data.d();
    let mut mean = vec![0.0; d];
    for r in data.rows() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= data.n() as f64);
    let mut rng = rng_from_seed(seed);
    let mut v = data.as_slice().to_vec();
    for _ in 0..size {
        for m in &mean {
            let g: f64 = StandardNormal.sample(&mut rng);
            v.push(m + std * g);
        }
    }
    let label = labels.iter().max().map_or(0, |l| l + 1);
    let mut out_labels = labels.to_vec();
    out_labels.extend(std::iter::repeat(label).take(size));
    Ok((PointSet::new(d, v)?, out_labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    pub k: usize,
    pub c1: f64,
    pub c2: f64,
    pub d: usize,
    /// Number of one-hot blocks per sub-instance.
    pub alpha: u32,
    /// Side of the box the sub-instance offsets are drawn from.
    pub offset_box: f64,
    pub noise: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams { k: 100, c1: 2.0, c2: 2.0, d: 100, alpha: 2, offset_box: 100.0, noise: DEFAULT_NOISE }
    }
}

/// `k1 = floor(k / c1)`, `k2 = floor((k - k1) / c2)`, `k3 = k - k1 - k2`, with empty
/// parts dropped.
pub fn benchmark_parts(k: usize, c1: f64, c2: f64) -> Result<Vec<usize>> {
    if !(c1 > 1.0 && c2 > 1.0) || k == 0 {
        return Err(Error::invalid("benchmark needs k >= 1 and c1, c2 > 1"));
    }
    let k1 = (k as f64 / c1).floor() as usize;
    let k2 = ((k - k1) as f64 / c2).floor() as usize;
    let k3 = k - k1 - k2;
    let parts: Vec<usize> = [k1, k2, k3].into_iter().filter(|&x| x > 0).collect();
    if parts.len() < 3 {
        log::info!("benchmark k = {k} gives only {} non-empty parts", parts.len());
    }
    Ok(parts)
}

/// Three sub-instances; sub-instance `i` has all `k_i^alpha` points of `alpha` stacked
/// one-hot blocks of width `k_i`. Grouping by the hot index of any one block is an optimal
/// `k_i`-clustering, and the `alpha` such clusterings are mutually far apart.
pub fn gen_benchmark(params: &BenchmarkParams, seed: u64) -> Result<PointSet> {
    let parts = benchmark_parts(params.k, params.c1, params.c2)?;
    let alpha = params.alpha.max(1) as usize;
    let d = params.d;
    let widest = parts.iter().max().copied().unwrap_or(0) * alpha;
    if d < widest {
        return Err(Error::invalid(format!("benchmark needs d >= alpha * k1 = {widest}, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut v = Vec::new();
    for &ki in &parts {
        let offset: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * params.offset_box).collect();
        let count = ki.pow(alpha as u32);
        for idx in 0..count {
            let mut row = offset.clone();
            let mut rest = idx;
            for b in 0..alpha {
                row[b * ki + rest % ki] += 1.0;
                rest /= ki;
            }
            v.extend(row);
        }
    }
    add_noise(&PointSet::new(d, v)?, params.noise, derive_seed(seed, 1))
}

/// `n - n_prime` uniform points in `[-1, 1]^2` plus columns `(x, 0.5^0), ..., (x, 0.5^r)`
/// at evenly spaced `x`; the last column is cut short so exactly `n_prime` column points
/// are produced.
pub fn gen_hardness(n: usize, n_prime: usize, r: u32, noise: f64, seed: u64) -> Result<PointSet> {
    if r == 0 || n_prime > n || n == 0 {
        return Err(Error::invalid(format!("hardness needs r >= 1 and n_prime <= n (n={n}, n'={n_prime})")));
    }
    let mut rng = rng_from_seed(seed);
    let mut v = Vec::with_capacity(2 * n);
    for _ in 0..n - n_prime {
        v.push(rng.random_range(-1.0..=1.0));
        v.push(rng.random_range(-1.0..=1.0));
    }
    let per_column = r as usize + 1;
    let columns = n_prime.div_ceil(per_column);
    for i in 0..n_prime {
        let col = i / per_column;
        let x = -1.0 + 2.0 * (col as f64 + 0.5) / columns as f64;
        v.push(x);
        v.push(0.5f64.powi((i % per_column) as i32));
    }
    add_noise(&PointSet::new(2, v)?, noise, derive_seed(seed, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetKind {
    COutlier { n: usize, c: usize, d: usize },
    Geometric { k: usize, c: usize, r: f64, d: usize },
    GaussianMixture { n: usize, kappa: usize, gamma: f64, d: usize },
    Benchmark { k: usize, c1: f64, c2: f64, d: usize },
    Hardness { n: usize, n_prime: usize, r: u32 },
}

/// A reproducible dataset description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DatasetKind,
    /// Defaults to `1e-3` (0 for the hardness instance).
    pub noise: Option<f64>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn noise_amplitude(&self) -> f64 {
        self.noise.unwrap_or(match self.kind {
            DatasetKind::Hardness { .. } => 0.0,
            _ => DEFAULT_NOISE,
        })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DatasetKind::COutlier { n, c, .. } => format!("c-outlier(n={n},c={c})"),
            DatasetKind::Geometric { k, c, r, .. } => format!("geometric(k={k},c={c},r={r})"),
            DatasetKind::GaussianMixture { n, kappa, gamma, .. } => {
                format!("gaussian-mixture(n={n},kappa={kappa},gamma={gamma})")
            }
            DatasetKind::Benchmark { k, c1, c2, .. } => format!("benchmark(k={k},c1={c1},c2={c2})"),
            DatasetKind::Hardness { n, n_prime, r } => format!("hardness(n={n},n'={n_prime},r={r})"),
        }
    }

    /// Generated points, with planted labels when the generator has them.
    pub fn generate(&self) -> Result<(PointSet, Option<Vec<usize>>)> {
        let noise = self.noise_amplitude();
        let seed = self.seed;
        Ok(match self.kind {
            DatasetKind::COutlier { n, c, d } => (gen_c_outlier(n, c, d, noise, seed)?, None),
            DatasetKind::Geometric { k, c, r, d } => (gen_geometric(k, c, r, d, noise, seed)?, None),
            DatasetKind::GaussianMixture { n, kappa, gamma, d } => {
                let params = MixtureParams { n, kappa, gamma, d, noise, ..Default::default() };
                let (p, l) = gen_gaussian_mixture(&params, seed)?;
                (p, Some(l))
            }
            DatasetKind::Benchmark { k, c1, c2, d } => {
                let params = BenchmarkParams { k, c1, c2, d, noise, ..Default::default() };
                (gen_benchmark(&params, seed)?, None)
            }
            DatasetKind::Hardness { n, n_prime, r } => (gen_hardness(n, n_prime, r, noise, seed)?, None),
        })
    }
}
