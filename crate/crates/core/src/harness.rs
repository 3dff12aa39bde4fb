//! Experiment grids: datasets × samplers × coreset sizes × seeds, with per-stage timings,
//! distortion per cell, aggregates and JSON/CSV reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
use std::time::Instant;
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetKind, DatasetSpec};
use crate::error::{Error, Result};
use crate::io::{load_dataset, Format};
use crate::metric::distortion;
use crate::model::{PointSet, Power, WeightedPointSet};
use crate::par;
use crate::rng::derive_seed;
use crate::samplers::{
    build_coreset, default_j, FastCoresetOptions, SamplerKind, SamplerSpec, WeightMode, DEFAULT_EPSILON,
};

/// Stage columns of the flat CSV table.
pub const STAGES: [&str; 5] = ["spread-reduction", "dimred", "seeding", "sensitivity", "sampling"];

/// A generated dataset or a file on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Generated(DatasetSpec),
    File { path: PathBuf, format: Option<String> },
}

impl DatasetRef {
    pub fn name(&self) -> String {
        match self {
            DatasetRef::Generated(s) => s.name(),
            DatasetRef::File { path, .. } => path.display().to_string(),
        }
    }

    pub fn load(&self) -> Result<PointSet> {
        match self {
            DatasetRef::Generated(s) => Ok(s.generate()?.0),
            DatasetRef::File { path, format } => {
                let fmt = match format {
                    Some(f) => f.parse()?,
                    None => Format::from_path(path),
                };
                load_dataset(path, fmt)
            }
        }
    }
}

/// One sampler column of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerEntry {
    #[serde(flatten)]
    pub kind: SamplerKind,
    #[serde(default)]
    pub fast: FastCoresetOptions,
    /// Label in reports; defaults to the sampler name.
    #[serde(default)]
    pub label: Option<String>,
}

impl SamplerEntry {
    pub fn new(kind: SamplerKind) -> SamplerEntry {
        SamplerEntry { kind, fast: FastCoresetOptions::default(), label: None }
    }

    pub fn labelled(kind: SamplerKind, fast: FastCoresetOptions, label: &str) -> SamplerEntry {
        SamplerEntry { kind, fast, label: Some(label.to_string()) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetRef>,
    pub samplers: Vec<SamplerEntry>,
    /// Coreset sizes are `round(m_scalar * k)`.
    pub m_scalars: Vec<f64>,
    /// Expands every welterweight entry without an explicit `j`.
    #[serde(default)]
    pub j_values: Vec<usize>,
    pub k: usize,
    pub z: u32,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub weight_mode: WeightMode,
    /// Adds one "full data" row per dataset and seed; its distortion is 1 by construction.
    #[serde(default)]
    pub control: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("experiment spec: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.samplers.is_empty() || self.m_scalars.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("experiment grid is empty"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::invalid("experiment seeds must be distinct"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Power::from_z(self.z)?;
        if self.m_scalars.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("m-scalars must be positive"));
        }
        let explicit = self.samplers.iter().filter_map(|e| match e.kind {
            SamplerKind::Welterweight { j } => j,
            _ => None,
        });
        if let Some(j) = self.j_values.iter().copied().chain(explicit).find(|&j| j == 0 || j > self.k) {
            return Err(Error::invalid(format!("welterweight j = {j} must lie in 1..={}", self.k)));
        }
        let open_welterweight = self.samplers.iter().any(|e| matches!(e.kind, SamplerKind::Welterweight { j: None }));
        if !self.j_values.is_empty() && !open_welterweight {
            return Err(Error::invalid("j values need a welterweight sampler without an explicit j"));
        }
        Ok(())
    }

    /// The sampler columns with welterweight entries expanded over `j_values`.
    fn columns(&self) -> Vec<(SamplerEntry, String)> {
        let mut out = Vec::new();
        for e in &self.samplers {
            match e.kind {
                SamplerKind::Welterweight { j: None } if !self.j_values.is_empty() => {
                    for &j in &self.j_values {
                        let kind = SamplerKind::Welterweight { j: Some(j) };
                        let label = e.label.clone().map_or_else(|| kind.to_string(), |l| format!("{l}(j={j})"));
                        out.push((SamplerEntry { kind, ..e.clone() }, label));
                    }
                }
                SamplerKind::Welterweight { j: None } => {
                    let kind = SamplerKind::Welterweight { j: Some(default_j(self.k)) };
                    let label = e.label.clone().unwrap_or_else(|| kind.to_string());
                    out.push((SamplerEntry { kind, ..e.clone() }, label));
                }
                kind => out.push((e.clone(), e.label.clone().unwrap_or_else(|| kind.to_string()))),
            }
        }
        out
    }
}

/// Label of control rows.
pub const CONTROL_LABEL: &str = "full-data";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub sampler: String,
    pub k: usize,
    pub z: u32,
    pub m: usize,
    pub seed: u64,
    /// `None` when the cell failed.
    pub distortion: Option<f64>,
    pub coreset_size: usize,
    pub total_seconds: f64,
    /// Seconds per stage, keyed by stage name.
    pub stages: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Summary { count: v.len(), median: median_sorted(&v), min: v[0], max: v[v.len() - 1] })
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Aggregate over the seeds of one (dataset, sampler, k, z, m) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub sampler: String,
    pub k: usize,
    pub z: u32,
    pub m: usize,
    pub failures: usize,
    pub distortion: Option<Summary>,
    pub total_seconds: Option<Summary>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn from_cells(cells: Vec<Cell>) -> ExperimentReport {
        let aggregates = aggregate(&cells);
        ExperimentReport { cells, aggregates }
    }

    /// Concatenates the cells of several reports and recomputes the aggregates.
    pub fn merge(reports: Vec<ExperimentReport>) -> ExperimentReport {
        ExperimentReport::from_cells(reports.into_iter().flat_map(|r| r.cells).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// One row per cell; stage columns in [`STAGES`] order, warnings joined by `;`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Internal(e.to_string());
        let mut header: Vec<String> =
            ["dataset", "sampler", "k", "z", "m", "seed", "distortion", "coreset_size", "total_seconds"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        header.extend(STAGES.iter().map(|s| format!("{s}_seconds")));
        header.push("warnings".into());
        header.push("error".into());
        w.write_record(&header).map_err(wrap)?;
        for c in &self.cells {
            let mut row = vec![
                c.dataset.clone(),
                c.sampler.clone(),
                c.k.to_string(),
                c.z.to_string(),
                c.m.to_string(),
                c.seed.to_string(),
                c.distortion.map(|d| format!("{d:?}")).unwrap_or_default(),
                c.coreset_size.to_string(),
                format!("{:?}", c.total_seconds),
            ];
            row.extend(STAGES.iter().map(|s| format!("{:?}", c.stages.get(*s).copied().unwrap_or(0.0))));
            row.push(c.warnings.join(";"));
            row.push(c.error.clone().unwrap_or_default());
            w.write_record(&row).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Writes `<path>` as JSON and the same path with extension `csv` as the flat table.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_json(path)?;
        self.write_csv_file(&path.with_extension("csv"))
    }
}

fn aggregate(cells: &[Cell]) -> Vec<Aggregate> {
    let mut groups: Vec<(Aggregate, Vec<f64>, Vec<f64>)> = Vec::new();
    for c in cells {
        let key =
            |a: &Aggregate| a.dataset == c.dataset && a.sampler == c.sampler && a.k == c.k && a.z == c.z && a.m == c.m;
        let idx = match groups.iter().position(|g| key(&g.0)) {
            Some(i) => i,
            None => {
                groups.push((
                    Aggregate {
                        dataset: c.dataset.clone(),
                        sampler: c.sampler.clone(),
                        k: c.k,
                        z: c.z,
                        m: c.m,
                        failures: 0,
                        distortion: None,
                        total_seconds: None,
                    },
                    vec![],
                    vec![],
                ));
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        match c.distortion {
            Some(d) => {
                g.1.push(d);
                g.2.push(c.total_seconds);
            }
            None => g.0.failures += 1,
        }
    }
    groups
        .into_iter()
        .map(|(mut a, d, t)| {
            a.distortion = Summary::of(&d);
            a.total_seconds = Summary::of(&t);
            a
        })
        .collect()
}

struct Job {
    dataset: usize,
    column: Option<usize>,
    m: usize,
    seed: u64,
}

/// Runs the whole grid. Datasets are loaded up front so timings cover the algorithms only;
/// a failing cell is recorded and the run continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let power = Power::from_z(spec.z)?;
    let mut datasets = Vec::with_capacity(spec.datasets.len());
    for d in &spec.datasets {
        datasets.push((d.name(), d.load()?));
    }
    let columns = spec.columns();
    let mut jobs = Vec::new();
    for di in 0..datasets.len() {
        if spec.control {
            for &seed in &spec.seeds {
                jobs.push(Job { dataset: di, column: None, m: datasets[di].1.n(), seed });
            }
        }
        for ci in 0..columns.len() {
            for &scalar in &spec.m_scalars {
                let m = ((scalar * spec.k as f64).round() as usize).max(1);
                for &seed in &spec.seeds {
                    jobs.push(Job { dataset: di, column: Some(ci), m, seed });
                }
            }
        }
    }
    let cells = par::map_indices(jobs.len(), |i| {
        let job = &jobs[i];
        let (name, data) = &datasets[job.dataset];
        let label = job.column.map_or(CONTROL_LABEL.to_string(), |c| columns[c].1.clone());
        let mut cell = Cell {
            dataset: name.clone(),
            sampler: label,
            k: spec.k,
            z: spec.z,
            m: job.m,
            seed: job.seed,
            distortion: None,
            coreset_size: 0,
            total_seconds: 0.0,
            stages: BTreeMap::new(),
            warnings: vec![],
            error: None,
        };
        let solver_seed = derive_seed(job.seed, 0xD15);
        let outcome = match job.column {
            None => {
                let full = WeightedPointSet::unit(data.clone());
                cell.coreset_size = full.len();
                distortion(data, &full, spec.k, power, solver_seed)
            }
            Some(c) => {
                let entry = &columns[c].0;
                let mut sampler = SamplerSpec::new(entry.kind, job.m, job.seed);
                sampler.epsilon = spec.epsilon;
                sampler.weight_mode = spec.weight_mode;
                sampler.fast = entry.fast;
                let start = Instant::now();
                build_coreset(data, spec.k, power, &sampler).and_then(|out| {
                    cell.total_seconds = start.elapsed().as_secs_f64();
                    for (stage, secs) in &out.report.stages {
                        *cell.stages.entry(stage.clone()).or_insert(0.0) += secs;
                    }
                    cell.coreset_size = out.coreset.len();
                    cell.warnings = out.report.warnings;
                    distortion(data, &out.coreset, spec.k, power, solver_seed)
                })
            }
        };
        match outcome {
            Ok(d) => cell.distortion = Some(d),
            Err(e) => {
                log::warn!("cell {} / {} / m={} / seed={} failed: {e}", cell.dataset, cell.sampler, cell.m, cell.seed);
                cell.error = Some(e.to_string());
            }
        }
        cell
    });
    let report = ExperimentReport::from_cells(cells);
    if let Some(path) = &spec.output {
        report.write(path)?;
    }
    Ok(report)
}

/// Runs several specs and merges their reports.
pub fn run_suite(specs: &[ExperimentSpec]) -> Result<ExperimentReport> {
    let mut reports = Vec::with_capacity(specs.len());
    for s in specs {
        reports.push(run_experiment(s)?);
    }
    Ok(ExperimentReport::merge(reports))
}

/// Fixed experiment grids at desk scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Runtime against k on a Gaussian mixture: n = 50 000, d = 50, k in {50, 100, 200, 400}.
    Fig1,
    /// Runtime against log spread on the hardness instance, with and without spread
    /// reduction: n = 50 000, r in {10, 20, 30}.
    Table3,
    /// Distortion over gamma in {0..4} and welterweight j in {1, ceil(log2 k), k}:
    /// n = 50 000, kappa = k = 100, m = 40k.
    GammaSweep,
}

impl Preset {
    /// Specs for the preset, with 10 seeds each; `quick` shrinks n and k by 10x and uses
    /// 2 seeds.
    pub fn specs(self, quick: bool) -> Vec<ExperimentSpec> {
        let seeds: Vec<u64> = if quick { vec![0, 1] } else { (0..10).collect() };
        let n = if quick { 5_000 } else { 50_000 };
        let base = |datasets: Vec<DatasetRef>, samplers: Vec<SamplerEntry>, k: usize| ExperimentSpec {
            datasets,
            samplers,
            m_scalars: vec![40.0],
            j_values: vec![],
            k,
            z: 2,
            seeds: seeds.clone(),
            epsilon: DEFAULT_EPSILON,
            weight_mode: WeightMode::Normalized,
            control: false,
            output: None,
        };
        let mixture = |kappa: usize, gamma: f64, d: usize, seed: u64| {
            DatasetRef::Generated(DatasetSpec {
                kind: DatasetKind::GaussianMixture { n, kappa, gamma, d },
                noise: None,
                seed,
            })
        };
        match self {
            Preset::Fig1 => {
                let ks: &[usize] = if quick { &[5, 10, 20, 40] } else { &[50, 100, 200, 400] };
                ks.iter()
                    .map(|&k| {
                        base(
                            vec![mixture(k, 0.0, 50, 1)],
                            vec![
                                SamplerEntry::new(SamplerKind::Uniform),
                                SamplerEntry::new(SamplerKind::Lightweight),
                                SamplerEntry::new(SamplerKind::Sensitivity),
                                SamplerEntry::new(SamplerKind::FastCoreset),
                            ],
                            k,
                        )
                    })
                    .collect()
            }
            Preset::Table3 => {
                let raw = FastCoresetOptions { use_spread_reduction: false, ..Default::default() };
                let datasets = [10u32, 20, 30]
                    .iter()
                    .map(|&r| {
                        DatasetRef::Generated(DatasetSpec {
                            kind: DatasetKind::Hardness { n, n_prime: n / 2, r },
                            noise: None,
                            seed: 1,
                        })
                    })
                    .collect();
                vec![base(
                    datasets,
                    vec![
                        SamplerEntry::new(SamplerKind::FastCoreset),
                        SamplerEntry::labelled(SamplerKind::FastCoreset, raw, "fast-coreset-no-spread-reduction"),
                    ],
                    if quick { 10 } else { 50 },
                )]
            }
            Preset::GammaSweep => {
                let k = if quick { 10 } else { 100 };
                let d = if quick { 10 } else { 50 };
                let datasets = (0..=4).map(|g| mixture(k, g as f64, d, 1)).collect();
                let mut spec = base(
                    datasets,
                    vec![
                        SamplerEntry::new(SamplerKind::Welterweight { j: None }),
                        SamplerEntry::new(SamplerKind::FastCoreset),
                    ],
                    k,
                );
                spec.j_values = vec![1, default_j(k), k];
                vec![spec]
            }
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Preset> {
        match s {
            "paper-fig1" | "fig1" => Ok(Preset::Fig1),
            "paper-table3" | "table3" => Ok(Preset::Table3),
            "paper-gamma-sweep" | "gamma-sweep" => Ok(Preset::GammaSweep),
            _ => Err(Error::invalid(format!("unknown preset `{s}`"))),
        }
    }
}
