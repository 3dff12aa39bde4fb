use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fastcoreset::datagen::{DatasetKind, DatasetSpec};
use fastcoreset::harness::{run_suite, ExperimentReport, ExperimentSpec, Preset};
use fastcoreset::io::{load_coreset, load_dataset, save_coreset, write_dataset, Format};
use fastcoreset::samplers::{build_coreset, SamplerKind, SamplerSpec, WeightMode};
use fastcoreset::seeding::AssignmentRule;
use fastcoreset::streaming::{split_blocks, stream_coreset, MergeTreePlan};
use fastcoreset::{distortion, Error, Power};
use serde_json::json;

const USAGE_ERROR: u8 = 1;
const DATA_ERROR: u8 = 2;

/// Coresets for k-means and k-median.
#[derive(Parser, Debug)]
#[command(name = "fastcoreset", version)]
struct Cli {
    /// Root seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FASTCORESET_THREADS")]
    threads: Option<usize>,
    /// File format for data and coresets; inferred from the extension when omitted
    /// (`.csv` is CSV, anything else binary).
    #[arg(long, global = true)]
    format: Option<FileFormat>,
    /// Per-cluster weight calibration for sensitivity-based samplers.
    #[arg(long, global = true, default_value = "normalized")]
    weight_mode: WeightArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FileFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightArg {
    Normalized,
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sampler {
    Uniform,
    Lightweight,
    Welterweight,
    Sensitivity,
    FastCoreset,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    TreeDistance,
    EuclideanRecheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    COutlier,
    Geometric,
    GaussianMixture,
    Benchmark,
    Hardness,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Build a coreset of a dataset.
    Coreset(CoresetArgs),
    /// Distortion of a coreset with respect to its dataset.
    Eval(EvalArgs),
    /// Run an experiment grid from a JSON spec or a preset.
    Bench(BenchArgs),
    /// Build a coreset with merge-and-reduce over blocks of the dataset.
    Stream(StreamArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    kind: Generator,
    #[arg(long, short)]
    out: PathBuf,
    /// Number of points (c-outlier, gaussian-mixture, hardness).
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Cluster count (geometric, benchmark).
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Outlier count (c-outlier) or points per cluster (geometric).
    #[arg(long, default_value_t = 5)]
    c: usize,
    /// Size ratio (geometric) or column height (hardness).
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 100)]
    kappa: usize,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Size ratios between the three benchmark sub-instances.
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    #[arg(long, default_value_t = 2.0)]
    c2: f64,
    /// Points on the columns of the hardness instance (defaults to n/2).
    #[arg(long)]
    n_prime: Option<usize>,
    /// Uniform noise amplitude per coordinate.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug)]
struct SamplerArgs {
    #[arg(long, default_value = "fast-coreset")]
    sampler: Sampler,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    z: u32,
    /// Coreset size; defaults to 40k.
    #[arg(long)]
    m: Option<usize>,
    /// Centers in the welterweight solution; defaults to ceil(log2 k).
    #[arg(long)]
    j: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Project to O(log k) dimensions before tree seeding.
    #[arg(long)]
    dimred: bool,
    #[arg(long)]
    no_spread_reduction: bool,
    #[arg(long, default_value = "euclidean-recheck")]
    rule: Rule,
}

#[derive(Args, Debug)]
struct CoresetArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Where to write the JSON run report (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    coreset: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    z: u32,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment spec (JSON).
    spec: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["spec", "paper_table3", "paper_gamma_sweep"])]
    paper_fig1: bool,
    #[arg(long, conflicts_with_all = ["spec", "paper_gamma_sweep"])]
    paper_table3: bool,
    #[arg(long, conflicts_with = "spec")]
    paper_gamma_sweep: bool,
    /// Shrink a preset to a few seconds of work.
    #[arg(long)]
    quick: bool,
    /// Report path; JSON is written there and CSV next to it. CSV goes to stdout otherwise.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    blocks: usize,
    #[command(flatten)]
    sampler: SamplerArgs,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(USAGE_ERROR)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            let data = e.is_data_error() || matches!(e, Error::DimensionMismatch { .. });
            ExitCode::from(if data { DATA_ERROR } else { USAGE_ERROR })
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure threads: {e}")))?;
    }
    let ctx = Context { seed: cli.seed, format: cli.format, weight_mode: cli.weight_mode };
    match cli.command {
        Command::Gen(a) => gen(&ctx, a),
        Command::Coreset(a) => coreset(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Stream(a) => stream(&ctx, a),
    }
}

struct Context {
    seed: u64,
    format: Option<FileFormat>,
    weight_mode: WeightArg,
}

impl Context {
    fn format_for(&self, path: &Path) -> Format {
        match self.format {
            Some(FileFormat::Csv) => Format::Csv,
            Some(FileFormat::Binary) => Format::Binary,
            None => Format::from_path(path),
        }
    }

    fn weight_mode(&self) -> WeightMode {
        match self.weight_mode {
            WeightArg::Normalized => WeightMode::Normalized,
            WeightArg::PaperLiteral => WeightMode::PaperLiteral,
        }
    }
}

fn gen(ctx: &Context, a: GenArgs) -> CliResult<()> {
    let kind = match a.kind {
        Generator::COutlier => DatasetKind::COutlier { n: a.n, c: a.c, d: a.d },
        Generator::Geometric => DatasetKind::Geometric { k: a.k, c: a.c, r: a.r, d: a.d },
        Generator::GaussianMixture => DatasetKind::GaussianMixture { n: a.n, kappa: a.kappa, gamma: a.gamma, d: a.d },
        Generator::Benchmark => DatasetKind::Benchmark { k: a.k, c1: a.c1, c2: a.c2, d: a.d },
        Generator::Hardness => {
            if a.r < 0.0 || a.r.fract() != 0.0 {
                return Err(Failure::Usage(format!("hardness needs a whole column height, got --r {}", a.r)));
            }
            DatasetKind::Hardness { n: a.n, n_prime: a.n_prime.unwrap_or(a.n / 2), r: a.r as u32 }
        }
    };
    let spec = DatasetSpec { kind, noise: a.noise, seed: ctx.seed };
    let (points, _) = spec.generate()?;
    write_dataset(&points, &a.out, ctx.format_for(&a.out))?;
    println!("{}", json!({ "dataset": spec.name(), "n": points.n(), "d": points.d(), "path": a.out }));
    Ok(())
}

fn sampler_spec(ctx: &Context, a: &SamplerArgs) -> CliResult<(SamplerSpec, Power)> {
    let kind = match a.sampler {
        Sampler::Uniform => SamplerKind::Uniform,
        Sampler::Lightweight => SamplerKind::Lightweight,
        Sampler::Welterweight => SamplerKind::Welterweight { j: a.j },
        Sampler::Sensitivity => SamplerKind::Sensitivity,
        Sampler::FastCoreset => SamplerKind::FastCoreset,
    };
    if a.j.is_some() && !matches!(a.sampler, Sampler::Welterweight) {
        return Err(Failure::Usage("--j only applies to --sampler welterweight".into()));
    }
    let power = Power::from_z(a.z).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut spec = SamplerSpec::new(kind, a.m.unwrap_or(40 * a.k), ctx.seed);
    spec.epsilon = a.epsilon;
    spec.weight_mode = ctx.weight_mode();
    spec.fast.use_dimred = a.dimred;
    spec.fast.use_spread_reduction = !a.no_spread_reduction;
    spec.fast.rule = match a.rule {
        Rule::TreeDistance => AssignmentRule::TreeDistance,
        Rule::EuclideanRecheck => AssignmentRule::EuclideanRecheck,
    };
    spec.validate(a.k).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((spec, power))
}

fn coreset(ctx: &Context, a: CoresetArgs) -> CliResult<()> {
    let (spec, power) = sampler_spec(ctx, &a.sampler)?;
    let data = load_dataset(&a.input, ctx.format_for(&a.input))?;
    let out = build_coreset(&data, a.sampler.k, power, &spec)?;
    save_coreset(&out.coreset, &a.out, ctx.format_for(&a.out))?;
    let report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    match a.report {
        Some(path) => std::fs::write(&path, report + "\n").map_err(|e| Failure::Lib(Error::Io { path, source: e }))?,
        None => println!("{report}"),
    }
    Ok(())
}

fn eval(ctx: &Context, a: EvalArgs) -> CliResult<()> {
    let power = Power::from_z(a.z).map_err(|e| Failure::Usage(e.to_string()))?;
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let data = load_dataset(&a.input, ctx.format_for(&a.input))?;
    let coreset = load_coreset(&a.coreset, ctx.format_for(&a.coreset))?;
    let dist = distortion(&data, &coreset, a.k, power, ctx.seed)?;
    println!("{}", json!({ "distortion": dist, "k": a.k, "z": a.z, "n": data.n(), "coreset_size": coreset.len() }));
    Ok(())
}

fn bench(_ctx: &Context, a: BenchArgs) -> CliResult<()> {
    let preset =
        [(a.paper_fig1, Preset::Fig1), (a.paper_table3, Preset::Table3), (a.paper_gamma_sweep, Preset::GammaSweep)]
            .into_iter()
            .find_map(|(on, p)| on.then_some(p));
    let specs = match (preset, &a.spec) {
        (Some(p), None) => p.specs(a.quick),
        (None, Some(path)) => {
            if a.quick {
                return Err(Failure::Usage("--quick only applies to presets".into()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            vec![ExperimentSpec::from_json(&text)?]
        }
        _ => return Err(Failure::Usage("give an experiment spec file or one of the --paper-* presets".into())),
    };
    let out = a.out.clone().or_else(|| specs.iter().find_map(|s| s.output.clone()));
    let report: ExperimentReport = run_suite(&specs)?;
    match out {
        Some(path) => {
            report.write(&path)?;
            eprintln!("wrote {} cells to {}", report.cells.len(), path.display());
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn stream(ctx: &Context, a: StreamArgs) -> CliResult<()> {
    if a.blocks == 0 {
        return Err(Failure::Usage("--blocks must be at least 1".into()));
    }
    let (spec, power) = sampler_spec(ctx, &a.sampler)?;
    let data = load_dataset(&a.input, ctx.format_for(&a.input))?;
    let blocks = split_blocks(&data, data.n().div_ceil(a.blocks).max(1))?;
    let plan = MergeTreePlan { k: a.sampler.k, power, sampler: spec };
    let coreset = stream_coreset(&blocks, &plan)?;
    save_coreset(&coreset, &a.out, ctx.format_for(&a.out))?;
    println!("{}", json!({ "blocks": blocks.len(), "n": data.n(), "coreset_size": coreset.len(), "path": a.out }));
    Ok(())
}
