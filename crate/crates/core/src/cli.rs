//! Command-line front end: `generate`, `fit`, `evaluate`, `interpret` and
//! `benchmark`. Every command writes a `manifest.json` next to its outputs.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{kmeans, KMeansConfig};
use crate::dataset::{load_csv, save_csv, ColumnSpec, GeoDataset};
use crate::em::{fit, InitMode, SticcConfig};
use crate::error::{Result, SticcError};
use crate::interpret::{betweenness, centrality_map, extract_graph};
use crate::metrics::{delaunay, evaluate, knn_symmetrized, AdjacencyGraph, MetricReport};
use crate::model::ToeplitzPrecision;
use crate::synthgen::{default_layout, generate, load_layout, table_attrs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sticc", version, about = "Spatial Toeplitz inverse covariance-based clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Kmeans,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjacencyArg {
    Delaunay,
    Knn,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the synthetic benchmark dataset.
    Generate {
        /// Layout JSON; the built-in ten-region layout when omitted.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a point CSV (`id,x,y,<attributes>`).
    Fit {
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        radius: u64,
        #[arg(long, default_value_t = 3.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        max_iter: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = InitArg::Kmeans)]
        init: InitArg,
        /// Fit on raw attribute values instead of standardized ones.
        #[arg(long)]
        no_standardize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against truth labels.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = AdjacencyArg::Delaunay)]
        adjacency: AdjacencyArg,
        /// Neighbours per point for `--adjacency knn`.
        #[arg(long, default_value_t = 6)]
        knn_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export each cluster's dependency graph and attribute centralities.
    Interpret {
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter sweep on the synthetic benchmark with baseline comparisons.
    Benchmark {
        /// Seeds `0..n` are used.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Reproducibility record written alongside every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
    pub version: String,
}

/// One cluster in `models.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub cluster: usize,
    /// Mean of the stacked subregion vector in the units the model was fitted in.
    pub mean: Vec<f64>,
    #[serde(flatten)]
    pub precision: ToeplitzPrecision,
    pub log_det: f64,
    pub members: usize,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &SticcError) -> i32 {
    match e {
        SticcError::NotPositiveDefinite | SticcError::NotSymmetric(_) => EXIT_FAILURE,
        _ => EXIT_USAGE,
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let start = Instant::now();
    match cmd {
        Command::Generate { layout, seed, out } => {
            let regions = match layout {
                Some(p) => load_layout(p).map_err(|e| SticcError::Schema(format!("{}: {e}", p.display())))?,
                None => default_layout(),
            };
            let (ds, truth) = generate(&regions, &table_attrs(), *seed)?;
            std::fs::create_dir_all(out)?;
            let points = out.join("points.csv");
            let truth_path = out.join("truth.csv");
            save_csv(&ds, &points)?;
            write_labels(&truth_path, &ds, &truth)?;
            let config = serde_json::json!({ "layout": regions });
            write_manifest(out, "generate", config, Some(*seed), &inputs(&[layout.as_deref()]), &[&points, &truth_path], start)?;
            Ok(EXIT_OK)
        }
        Command::Fit { input, k, radius, beta, lambda, max_iter, seed, init, no_standardize, out } => {
            let ds = load_csv(input, &ColumnSpec::default())?;
            let cfg = SticcConfig {
                max_em_iter: *max_iter as usize,
                seed: *seed,
                init: match init {
                    InitArg::Kmeans => InitMode::Kmeans,
                    InitArg::Random => InitMode::Random,
                },
                standardize: !no_standardize,
                ..SticcConfig::new(*k as usize, *radius as usize, *beta, *lambda)
            };
            let result = fit(&ds, &cfg)?;
            std::fs::create_dir_all(out)?;
            let labels_path = out.join("labels.csv");
            let models_path = out.join("models.json");
            let trace_path = out.join("trace.csv");
            write_labels(&labels_path, &ds, result.labels())?;

            let mut outputs = vec![labels_path.clone(), models_path.clone(), trace_path.clone()];
            let records: Vec<ModelRecord> = result
                .models
                .iter()
                .enumerate()
                .map(|(c, m)| ModelRecord {
                    cluster: c,
                    mean: m.mean().iter().copied().collect(),
                    precision: m.precision().clone(),
                    log_det: m.log_det(),
                    members: result.labels().iter().filter(|&&l| l == c).count(),
                })
                .collect();
            write_json(&models_path, &records)?;
            for (c, m) in result.models.iter().enumerate() {
                let p = out.join(format!("theta_{c}.csv"));
                m.precision().write_assembled_csv(BufWriter::new(File::create(&p)?))?;
                outputs.push(p);
            }

            let mut w = csv::Writer::from_path(&trace_path)?;
            w.write_record(["iter", "objective", "likelihood", "penalty", "sparsity"])?;
            for t in &result.trace {
                w.write_record([
                    t.iter.to_string(),
                    t.objective.to_string(),
                    t.likelihood.to_string(),
                    t.penalty.to_string(),
                    t.sparsity.to_string(),
                ])?;
            }
            w.flush()?;

            let config = serde_json::json!({
                "config": cfg,
                "iterations": result.iterations,
                "converged": result.converged,
                "scaling": result.scaling,
            });
            let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            write_manifest(out, "fit", config, Some(*seed), &inputs(&[Some(input.as_path())]), &outs, start)?;
            if result.converged {
                Ok(EXIT_OK)
            } else {
                eprintln!("warning: labels still changing after {} iterations", result.iterations);
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Evaluate { labels, truth, points, adjacency, knn_k, out } => {
            let ds = load_csv(points, &ColumnSpec::default())?;
            let pred = read_labels(labels, ds.len())?;
            let truth_labels = read_labels(truth, ds.len())?;
            let adj = match adjacency {
                AdjacencyArg::Delaunay => delaunay(&ds)?,
                AdjacencyArg::Knn => knn_symmetrized(&ds, (*knn_k).min(ds.len().saturating_sub(1)).max(1))?,
            };
            if adj.collinear_fallback() {
                eprintln!("warning: all points are collinear; using the path along the line as adjacency");
            }
            let report = evaluate_labels(&truth_labels, &pred, &adj)?;
            std::fs::create_dir_all(out)?;
            let metrics_path = out.join("metrics.json");
            write_json(&metrics_path, &report)?;
            println!("{}", serde_json::to_string(&report)?);
            let config = serde_json::json!({ "adjacency": format!("{adjacency:?}").to_lowercase(), "knn_k": knn_k });
            let ins = inputs(&[Some(labels.as_path()), Some(truth.as_path()), Some(points.as_path())]);
            write_manifest(out, "evaluate", config, None, &ins, &[&metrics_path], start)?;
            Ok(EXIT_OK)
        }
        Command::Interpret { models, threshold, out } => {
            let records: Vec<ModelRecord> = serde_json::from_reader(std::io::BufReader::new(File::open(models)?))?;
            std::fs::create_dir_all(out)?;
            let mut outputs = Vec::new();
            for r in &records {
                let g = extract_graph(&r.precision, *threshold)?;
                let edges = out.join(format!("cluster_{}_edges.csv", r.cluster));
                g.write_edges_csv(BufWriter::new(File::create(&edges)?))?;
                let cent = out.join(format!("cluster_{}_centrality.json", r.cluster));
                write_json(&cent, &centrality_map(&betweenness(&g)))?;
                outputs.push(edges);
                outputs.push(cent);
            }
            let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            let config = serde_json::json!({ "threshold": threshold });
            write_manifest(out, "interpret", config, None, &inputs(&[Some(models.as_path())]), &outs, start)?;
            Ok(EXIT_OK)
        }
        Command::Benchmark { seeds, layout, lambda, out } => {
            let regions = match layout {
                Some(p) => load_layout(p).map_err(|e| SticcError::Schema(format!("{}: {e}", p.display())))?,
                None => default_layout(),
            };
            let rows = benchmark(&regions, *seeds, *lambda)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("benchmark.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["method", "R", "beta", "ari", "macro_f1", "join_count"])?;
            for r in &rows {
                w.write_record([
                    r.method.clone(),
                    r.radius.map_or(String::new(), |v| v.to_string()),
                    r.beta.map_or(String::new(), |v| v.to_string()),
                    r.ari.to_string(),
                    r.macro_f1.to_string(),
                    r.join_count.to_string(),
                ])?;
            }
            w.flush()?;
            let config = serde_json::json!({ "seeds": seeds, "lambda": lambda, "layout": regions });
            write_manifest(out, "benchmark", config, None, &inputs(&[layout.as_deref()]), &[&path], start)?;
            Ok(EXIT_OK)
        }
    }
}

/// Metrics with `K` taken from the largest label in either partition.
pub fn evaluate_labels(truth: &[usize], pred: &[usize], adj: &AdjacencyGraph) -> Result<MetricReport> {
    let k = truth.iter().chain(pred).max().map_or(1, |m| m + 1);
    evaluate(truth, pred, k, adj)
}

/// Median metrics of one method over the seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub radius: Option<usize>,
    pub beta: Option<f64>,
    pub ari: f64,
    pub macro_f1: f64,
    pub join_count: f64,
}

const SWEEP_BETA: f64 = 3.0;
const BETAS: [f64; 4] = [0.0, 1.0, 3.0, 5.0];

/// STICC over `R = 1..=4` at `β = 3`, then over `β ∈ {0, 1, 3, 5}` at the
/// best `R`, plus K-Means and spatial K-Means; medians over seeds `0..n`.
pub fn benchmark(regions: &[crate::synthgen::RegionSpec], seeds: u64, lambda: f64) -> Result<Vec<BenchmarkRow>> {
    let data: Vec<(GeoDataset, Vec<usize>, AdjacencyGraph)> = (0..seeds)
        .map(|s| {
            let (ds, truth) = generate(regions, &table_attrs(), s)?;
            let adj = delaunay(&ds)?;
            Ok((ds, truth, adj))
        })
        .collect::<Result<_>>()?;
    let k = data[0].1.iter().max().map_or(1, |m| m + 1);

    let sticc_row = |radius: usize, beta: f64| -> Result<BenchmarkRow> {
        let reports = for_seeds(&data, |seed, ds| {
            Ok(fit(ds, &SticcConfig::new(k, radius, beta, lambda).with_seed(seed))?.assignment.labels)
        })?;
        Ok(summarise("STICC", Some(radius), Some(beta), &reports))
    };

    let mut rows = Vec::new();
    for radius in 1..=4 {
        rows.push(sticc_row(radius, SWEEP_BETA)?);
    }
    let best = rows.iter().max_by(|a, b| a.ari.total_cmp(&b.ari)).and_then(|r| r.radius).expect("four rows");
    for beta in BETAS {
        rows.push(sticc_row(best, beta)?);
    }
    let km = for_seeds(&data, |seed, ds| kmeans(ds, &KMeansConfig::new(k, seed)))?;
    rows.push(summarise("K-Means", None, None, &km));
    let skm = for_seeds(&data, |seed, ds| kmeans(ds, &KMeansConfig::spatial(k, seed)))?;
    rows.push(summarise("Spatial K-Means", None, None, &skm));
    Ok(rows)
}

fn for_seeds<F>(data: &[(GeoDataset, Vec<usize>, AdjacencyGraph)], labels_for: F) -> Result<Vec<MetricReport>>
where
    F: Fn(u64, &GeoDataset) -> Result<Vec<usize>> + Sync,
{
    let one = |(seed, (ds, truth, adj)): (usize, &(GeoDataset, Vec<usize>, AdjacencyGraph))| -> Result<MetricReport> {
        let pred = labels_for(seed as u64, ds)?;
        evaluate_labels(truth, &pred, adj)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_iter().enumerate().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.iter().enumerate().map(one).collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarise(method: &str, radius: Option<usize>, beta: Option<f64>, reports: &[MetricReport]) -> BenchmarkRow {
    let col = |f: fn(&MetricReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>());
    BenchmarkRow {
        method: method.to_string(),
        radius,
        beta,
        ari: col(|r| r.ari),
        macro_f1: col(|r| r.macro_f1),
        join_count: col(|r| r.join_count.ratio),
    }
}

fn write_labels(path: &Path, ds: &GeoDataset, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "label"])?;
    for (p, l) in ds.points().iter().zip(labels) {
        w.write_record([p.id.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `id,label` file whose ids are exactly `0..n`, in any order.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["id", "label"] {
        return Err(SticcError::Schema(format!("{}: expected header 'id,label', got '{}'", path.display(), header.join(","))));
    }
    let mut labels = vec![None; n];
    let mut rows = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows += 1;
        let parse = |i: usize| -> Result<usize> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse().map_err(|_| SticcError::Parse { row, message: format!("'{raw}' is not a non-negative integer") })
        };
        let (id, label) = (parse(0)?, parse(1)?);
        let slot = labels.get_mut(id).ok_or_else(|| SticcError::Parse { row, message: format!("id {id} is out of range for {n} points") })?;
        if slot.replace(label).is_some() {
            return Err(SticcError::Parse { row, message: format!("duplicate id {id}") });
        }
    }
    if rows != n {
        return Err(SticcError::Schema(format!("{}: {rows} label rows but {n} points", path.display())));
    }
    Ok(labels.into_iter().map(|l| l.expect("every id seen once")).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn inputs(paths: &[Option<&Path>]) -> Vec<String> {
    paths.iter().flatten().map(|p| p.display().to_string()).collect()
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: &[String],
    outputs: &[&Path],
    start: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        inputs: inputs.to_vec(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        duration_secs: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}
