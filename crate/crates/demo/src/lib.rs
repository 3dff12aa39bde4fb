//! WebAssembly bindings behind `www/index.html`.
//!
//! A [`Demo`] holds one 2-D dataset. The page can regenerate it, build a coreset of it
//! with any sampler, and compare the samplers' distortion over a few seeds.

use fastcoreset::datagen::{gen_c_outlier, gen_gaussian_mixture, plant_cluster_at_mean, MixtureParams};
use fastcoreset::samplers::{build_coreset, SamplerKind, SamplerSpec};
use fastcoreset::{distortion, Error, PointSet, Power};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const SAMPLERS: [&str; 5] = ["uniform", "lightweight", "welterweight", "sensitivity", "fast-coreset"];

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    points: PointSet,
    coreset: Vec<f64>,
}

#[wasm_bindgen]
impl Demo {
    /// `kind` is "mixture", "imbalanced" (a mixture with a small cluster planted at the
    /// global mean) or "outliers".
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, n: usize, clusters: usize, gamma: f64, seed: u64) -> Result<Demo, JsError> {
        Demo::generate(kind, n, clusters, gamma, seed).map_err(js_err)
    }

    /// Flat `[x0, y0, x1, y1, ...]`.
    pub fn points(&self) -> Vec<f64> {
        self.points.as_slice().to_vec()
    }

    pub fn len(&self) -> usize {
        self.points.n()
    }

    pub fn is_empty(&self) -> bool {
        self.points.n() == 0
    }

    /// Builds a coreset, keeps it for [`Demo::coreset`] and returns a JSON summary.
    #[wasm_bindgen(js_name = buildCoreset)]
    pub fn build_coreset_js(&mut self, sampler: &str, k: usize, m: usize, seed: u64) -> Result<String, JsError> {
        self.build(sampler, k, m, seed).map_err(js_err)
    }

    /// Flat `[x0, y0, w0, x1, y1, w1, ...]` of the last coreset.
    pub fn coreset(&self) -> Vec<f64> {
        self.coreset.clone()
    }

    /// Median distortion of every sampler over `runs` seeds, as JSON.
    pub fn compare(&self, k: usize, m: usize, runs: u64) -> Result<String, JsError> {
        self.compare_samplers(k, m, runs).map_err(js_err)
    }
}

impl Demo {
    pub fn generate(kind: &str, n: usize, clusters: usize, gamma: f64, seed: u64) -> fastcoreset::Result<Demo> {
        let params = MixtureParams { n, kappa: clusters, gamma, d: 2, ..Default::default() };
        let points = match kind {
            "mixture" => gen_gaussian_mixture(&params, seed)?.0,
            "imbalanced" => {
                let params = MixtureParams { cluster_std: 2.0, ..params };
                let (p, labels) = gen_gaussian_mixture(&params, seed)?;
                plant_cluster_at_mean(&p, &labels, (n / 200).max(5), 0.2, seed)?.0
            }
            "outliers" => gen_c_outlier(n, clusters, 2, 1e-3, seed)?,
            other => return Err(Error::InvalidInput(format!("unknown dataset kind '{other}'"))),
        };
        Ok(Demo { points, coreset: Vec::new() })
    }

    pub fn build(&mut self, sampler: &str, k: usize, m: usize, seed: u64) -> fastcoreset::Result<String> {
        let spec = SamplerSpec::new(sampler.parse::<SamplerKind>()?, m, seed);
        let out = build_coreset(&self.points, k, Power::KMeans, &spec)?;
        let c = &out.coreset;
        self.coreset = c.points().rows().zip(c.weights()).flat_map(|(r, &w)| [r[0], r[1], w]).collect();
        let dist = distortion(&self.points, c, k, Power::KMeans, seed)?;
        Ok(json!({
            "sampler": sampler,
            "size": c.len(),
            "distortion": dist,
            "seconds": out.report.total_seconds(),
            "warnings": out.report.warnings,
        })
        .to_string())
    }

    pub fn compare_samplers(&self, k: usize, m: usize, runs: u64) -> fastcoreset::Result<String> {
        let mut rows = Vec::new();
        for name in SAMPLERS {
            let kind: SamplerKind = name.parse()?;
            let mut ds = Vec::new();
            for seed in 0..runs.max(1) {
                let out = build_coreset(&self.points, k, Power::KMeans, &SamplerSpec::new(kind, m, seed))?;
                ds.push(distortion(&self.points, &out.coreset, k, Power::KMeans, seed)?);
            }
            ds.sort_by(f64::total_cmp);
            rows.push(json!({ "sampler": name, "median": ds[ds.len() / 2], "worst": ds[ds.len() - 1] }));
        }
        Ok(serde_json::Value::Array(rows).to_string())
    }
}
