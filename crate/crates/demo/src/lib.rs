//! Browser bindings for the sticc clustering library.
//!
//! Every export is a thin wrapper over a plain Rust function that returns a
//! JSON string, so the logic can be tested natively.

use serde::Serialize;
use sticc::baselines::{kmeans, KMeansConfig};
use sticc::dataset::GeoDataset;
use sticc::em::{fit, SticcConfig};
use sticc::interpret::{betweenness, extract_graph, ranking};
use sticc::metrics::{delaunay, evaluate, MetricReport};
use sticc::synthgen::{default_layout, generate, table_attrs, ATTR_NAMES};
use wasm_bindgen::prelude::*;

/// Number of planted clusters in the default layout.
pub const TRUE_K: usize = 7;

#[derive(Serialize)]
struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    attrs: Vec<Vec<f64>>,
    attr_names: Vec<&'static str>,
    truth: Vec<usize>,
}

#[derive(Serialize)]
struct ClusterSummary {
    members: usize,
    /// Attribute names from most to least central.
    ranking: Vec<&'static str>,
    centrality: Vec<f64>,
}

#[derive(Serialize)]
struct FitOutput {
    labels: Vec<usize>,
    metrics: MetricReport,
    objective: Vec<f64>,
    iterations: usize,
    converged: bool,
    clusters: Vec<ClusterSummary>,
}

#[derive(Serialize)]
struct BaselineOutput {
    labels: Vec<usize>,
    metrics: MetricReport,
}

fn synthetic(seed: u64) -> Result<(GeoDataset, Vec<usize>), String> {
    generate(&default_layout(), &table_attrs(), seed).map_err(|e| e.to_string())
}

fn score(ds: &GeoDataset, truth: &[usize], labels: &[usize], k: usize) -> Result<MetricReport, String> {
    let adj = delaunay(ds).map_err(|e| e.to_string())?;
    evaluate(truth, labels, k.max(TRUE_K), &adj).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Points, attributes and planted labels of the synthetic layout.
pub fn dataset_json(seed: u64) -> Result<String, String> {
    let (ds, truth) = synthetic(seed)?;
    let pts = ds.points();
    to_json(&Dataset {
        x: pts.iter().map(|p| p.coord[0]).collect(),
        y: pts.iter().map(|p| p.coord[1]).collect(),
        attrs: pts.iter().map(|p| p.attrs.clone()).collect(),
        attr_names: ATTR_NAMES.to_vec(),
        truth,
    })
}

/// Fits STICC to the synthetic data for `seed` and scores it against the
/// planted labels.
pub fn fit_json(seed: u64, k: usize, radius: usize, beta: f64, lambda: f64) -> Result<String, String> {
    let (ds, truth) = synthetic(seed)?;
    let cfg = SticcConfig::new(k, radius, beta, lambda).with_seed(seed);
    let result = fit(&ds, &cfg).map_err(|e| e.to_string())?;
    let mut clusters = Vec::with_capacity(k);
    for model in &result.models {
        let graph = extract_graph(model.precision(), 1e-5).map_err(|e| e.to_string())?;
        let centrality = betweenness(&graph);
        clusters.push(ClusterSummary {
            members: model.member_count(),
            ranking: ranking(&centrality).into_iter().map(|i| ATTR_NAMES[i]).collect(),
            centrality,
        });
    }
    to_json(&FitOutput {
        labels: result.labels().to_vec(),
        metrics: score(&ds, &truth, result.labels(), k)?,
        objective: result.objective_trace.clone(),
        iterations: result.iterations,
        converged: result.converged,
        clusters,
    })
}

/// K-Means on attributes only, or on attributes plus coordinates when
/// `spatial` is set.
pub fn kmeans_json(seed: u64, k: usize, spatial: bool) -> Result<String, String> {
    let (ds, truth) = synthetic(seed)?;
    let cfg = if spatial { KMeansConfig::spatial(k, seed) } else { KMeansConfig::new(k, seed) };
    let labels = kmeans(&ds, &cfg).map_err(|e| e.to_string())?;
    let metrics = score(&ds, &truth, &labels, k)?;
    to_json(&BaselineOutput { labels, metrics })
}

// JS numbers are f64; seeds arrive as u32 to stay exact.

#[wasm_bindgen(js_name = dataset)]
pub fn wasm_dataset(seed: u32) -> Result<String, JsValue> {
    dataset_json(seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitSticc)]
pub fn wasm_fit(seed: u32, k: u32, radius: u32, beta: f64, lambda: f64) -> Result<String, JsValue> {
    fit_json(seed.into(), k as usize, radius as usize, beta, lambda).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kmeans)]
pub fn wasm_kmeans(seed: u32, k: u32, spatial: bool) -> Result<String, JsValue> {
    kmeans_json(seed.into(), k as usize, spatial).map_err(|e| JsValue::from_str(&e))
}
