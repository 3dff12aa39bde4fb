//! Coresets for k-means and k-median clustering.
//!
//! A coreset is a small weighted subset whose clustering cost approximates the cost of
//! the full data for every choice of centers. This crate builds them with uniform,
//! lightweight, welterweight and sensitivity sampling, and with the near-linear-time
//! Fast-Coreset pipeline (tree-metric seeding over a shifted quadtree, optionally after
//! random projection and spread reduction). It also ships the evaluation pieces:
//! the distortion metric, synthetic generators, merge-and-reduce streaming, file
//! formats and an experiment runner.
//!
//! ```
//! use fastcoreset::{datagen, samplers, distortion, Power};
//!
//! let (points, _) = datagen::gen_gaussian_mixture(&datagen::MixtureParams {
//!     n: 2_000, kappa: 5, gamma: 0.0, d: 3, ..Default::default()
//! }, 1).unwrap();
//! let spec = samplers::SamplerSpec::new(samplers::SamplerKind::FastCoreset, 200, 7);
//! let out = samplers::build_coreset(&points, 5, Power::KMeans, &spec).unwrap();
//! let dist = distortion(&points, &out.coreset, 5, Power::KMeans, 3).unwrap();
//! assert!(dist >= 1.0);
//! ```

pub mod datagen;
pub mod dimred;
pub mod error;
pub mod harness;
pub mod io;
mod metric;
pub mod model;
mod par;
pub mod quadtree;
pub mod rng;
pub mod samplers;
pub mod seeding;
pub mod spread;
pub mod streaming;

pub use error::{Error, Result};
pub use metric::{distortion, distortion_with_solution};
pub use model::{
    assign, cost, spread_summary, Assignment, ClusteringSolution, Dataset, PointSet, Power, SpreadSummary,
    WeightedPointSet,
};
