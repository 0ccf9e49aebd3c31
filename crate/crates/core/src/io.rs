//! On-disk formats for datasets, fits and reports.
//!
//! A dataset directory holds `lattice.json`, `y.csv`, `W.csv`, `X.csv`, an
//! optional `truth.json`, and optionally a held-out set in `test/` with the
//! same layout. A fit directory holds `config.json`, `beta_hat.csv`,
//! `partitions.csv`, `clusters.csv`, `coefficients.csv` and
//! `diagnostics.csv`. All numbers are written in shortest round-trip form,
//! so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, PartitionState};
use crate::mcmc::{DiagnosticRow, FitResult, RunConfig};
use crate::regression::{CoefficientState, Dataset};
use crate::summary::{MetricRow, MetricsReport, SimilarityMatrix};
use crate::synth::Scenario;

pub const TEST_DIR: &str = "test";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LatticeShape {
    height: usize,
    width: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn header(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn push_row<I: IntoIterator<Item = String>>(out: &mut String, fields: I) {
    let mut first = true;
    for f in fields {
        if !first {
            out.push(',');
        }
        out.push_str(&f);
        first = false;
    }
    out.push('\n');
}

/// Reads a headed numeric CSV into its header and row-major rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => format_err(path, format!("{other:?}")),
        })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|s| {
                let s = s.trim();
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>()
                        .map_err(|_| format_err(path, format!("row {}: cannot parse {s:?}", i + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((names, rows))
}

fn matrix_csv(prefix: &str, cols: usize, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    push_row(&mut out, header(prefix, cols));
    for r in rows {
        push_row(&mut out, r.iter().map(f64::to_string));
    }
    out
}

/// Writes the grid shape of `lattice` to `dir/lattice.json`.
pub fn write_lattice(dir: &Path, lattice: &Lattice<f64>) -> Result<()> {
    write_json(
        &dir.join("lattice.json"),
        &LatticeShape {
            height: lattice.height(),
            width: lattice.width(),
        },
    )
}

/// Reads `dir/lattice.json` into a lattice with zero coupling.
pub fn read_lattice(dir: &Path) -> Result<Lattice<f64>> {
    let shape: LatticeShape = read_json(&dir.join("lattice.json"))?;
    Lattice::new(shape.height, shape.width, 0.0)
}

/// Writes `data` (and the truth, when given) into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset<f64>, truth: Option<&Scenario<f64>>) -> Result<()> {
    write_lattice(dir, data.lattice())?;
    let mut y = String::from("y\n");
    for v in data.y() {
        let _ = writeln!(y, "{v}");
    }
    write_text(&dir.join("y.csv"), &y)?;
    write_text(
        &dir.join("W.csv"),
        &matrix_csv("w", data.q(), (0..data.n()).map(|i| data.covariates_row(i))),
    )?;
    write_text(
        &dir.join("X.csv"),
        &matrix_csv("x", data.p(), (0..data.n()).map(|i| data.image(i))),
    )?;
    if let Some(t) = truth {
        write_json(&dir.join("truth.json"), t)?;
    }
    Ok(())
}

/// Reads a dataset directory (without its test subset). The lattice
/// coupling is left at zero; fitting sets it from the run configuration.
pub fn read_dataset(dir: &Path) -> Result<Dataset<f64>> {
    let lattice = read_lattice(dir)?;
    let y_path = dir.join("y.csv");
    let (_, y_rows) = read_numeric_csv(&y_path)?;
    let y: Vec<f64> = y_rows
        .iter()
        .map(|r| r.first().copied().ok_or_else(|| format_err(&y_path, "empty row")))
        .collect::<Result<_>>()?;
    let (_, w_rows) = read_numeric_csv(&dir.join("W.csv"))?;
    let x_path = dir.join("X.csv");
    let (_, x_rows) = read_numeric_csv(&x_path)?;
    Dataset::from_rows(y, &w_rows, &x_rows, lattice).map_err(|e| match e {
        Error::DimensionMismatch { .. } | Error::NonFinite(_) => format_err(dir, e.to_string()),
        other => other,
    })
}

/// Writes a training set, its truth, and a held-out set under `test/`.
pub fn write_scenario(dir: &Path, truth: &Scenario<f64>, train: &Dataset<f64>, test: &Dataset<f64>) -> Result<()> {
    write_dataset(dir, train, Some(truth))?;
    write_dataset(&dir.join(TEST_DIR), test, None)
}

pub fn read_truth(dir: &Path) -> Result<Option<Scenario<f64>>> {
    let path = dir.join("truth.json");
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

pub fn read_test_set(dir: &Path) -> Result<Option<Dataset<f64>>> {
    let test = dir.join(TEST_DIR);
    if !test.join("y.csv").exists() {
        return Ok(None);
    }
    read_dataset(&test).map(Some)
}

fn labels_line(labels: &[usize]) -> impl Iterator<Item = String> + '_ {
    labels.iter().map(|l| (l + 1).to_string())
}

/// Writes every file of a fit directory.
pub fn write_fit(dir: &Path, fit: &FitResult<f64>) -> Result<()> {
    write_json(&dir.join("config.json"), &fit.config)?;
    let mut beta_hat = String::from("beta_hat\n");
    for b in &fit.beta_hat {
        let _ = writeln!(beta_hat, "{b}");
    }
    write_text(&dir.join("beta_hat.csv"), &beta_hat)?;

    let p = fit.beta_hat.len();
    let q = fit.coefficient_draws.first().map_or(0, |c| c.mu.len());
    let mut partitions = String::new();
    push_row(
        &mut partitions,
        ["draw".into(), "chain".into()].into_iter().chain(header("z", p)),
    );
    let mut clusters = String::from("draw,cluster,size,beta_star,eta_star\n");
    let mut coefficients = String::new();
    push_row(
        &mut coefficients,
        ["draw".into(), "chain".into()]
            .into_iter()
            .chain(header("mu", q))
            .chain(["sigma2".into()])
            .chain(header("beta", p)),
    );
    for d in 0..fit.len() {
        let s = &fit.partition_draws[d];
        let c = &fit.coefficient_draws[d];
        let chain = fit.draw_chain[d];
        push_row(
            &mut partitions,
            [d.to_string(), chain.to_string()]
                .into_iter()
                .chain(labels_line(s.labels())),
        );
        for m in 0..s.num_clusters() {
            let _ = writeln!(
                clusters,
                "{d},{},{},{},{}",
                m + 1,
                s.sizes()[m],
                c.beta_star[m],
                c.eta_star[m]
            );
        }
        push_row(
            &mut coefficients,
            [d.to_string(), chain.to_string()]
                .into_iter()
                .chain(c.mu.iter().map(f64::to_string))
                .chain([c.sigma2.to_string()])
                .chain(fit.pixel_betas(d).iter().map(f64::to_string)),
        );
    }
    write_text(&dir.join("partitions.csv"), &partitions)?;
    write_text(&dir.join("clusters.csv"), &clusters)?;
    write_text(&dir.join("coefficients.csv"), &coefficients)?;

    let mut diagnostics = String::from("chain,iteration,num_clusters,num_nested,sigma2,log_posterior\n");
    for r in &fit.diagnostics {
        let _ = writeln!(
            diagnostics,
            "{},{},{},{},{},{}",
            r.chain, r.iteration, r.num_clusters, r.num_nested, r.sigma2, r.log_posterior
        );
    }
    write_text(&dir.join("diagnostics.csv"), &diagnostics)
}

fn as_index(path: &Path, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(format_err(path, format!("expected a nonnegative integer, got {v}")))
    }
}

/// Reads a fit directory written by [`write_fit`].
pub fn read_fit(dir: &Path) -> Result<FitResult<f64>> {
    let config: RunConfig<f64> = read_json(&dir.join("config.json"))?;
    let (_, beta_hat) = read_numeric_csv(&dir.join("beta_hat.csv"))?;
    let beta_hat: Vec<f64> = beta_hat.into_iter().filter_map(|r| r.first().copied()).collect();

    let part_path = dir.join("partitions.csv");
    let (_, part_rows) = read_numeric_csv(&part_path)?;
    let mut draw_chain = Vec::with_capacity(part_rows.len());
    let mut partition_draws = Vec::with_capacity(part_rows.len());
    for r in &part_rows {
        if r.len() < 2 {
            return Err(format_err(&part_path, "short row"));
        }
        draw_chain.push(as_index(&part_path, r[1])?);
        let labels = r[2..]
            .iter()
            .map(|&v| {
                as_index(&part_path, v).and_then(|l| {
                    l.checked_sub(1)
                        .ok_or_else(|| format_err(&part_path, "labels are 1-based"))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        partition_draws.push(PartitionState::from_labels(&labels));
    }

    let coef_path = dir.join("coefficients.csv");
    let (names, coef_rows) = read_numeric_csv(&coef_path)?;
    let q = names.iter().filter(|n| n.starts_with("mu_")).count();
    let clus_path = dir.join("clusters.csv");
    let (_, clus_rows) = read_numeric_csv(&clus_path)?;
    if coef_rows.len() != partition_draws.len() {
        return Err(format_err(&coef_path, "row count differs from partitions.csv"));
    }
    let mut coefficient_draws: Vec<CoefficientState<f64>> = coef_rows
        .iter()
        .zip(&partition_draws)
        .map(|(r, s)| CoefficientState {
            mu: r[2..2 + q].to_vec(),
            beta_star: vec![f64::NAN; s.num_clusters()],
            sigma2: r[2 + q],
            eta_star: vec![f64::NAN; s.num_clusters()],
        })
        .collect();
    for r in &clus_rows {
        let d = as_index(&clus_path, r[0])?;
        let m = as_index(&clus_path, r[1])?;
        let c = coefficient_draws
            .get_mut(d)
            .filter(|c| m >= 1 && m <= c.beta_star.len())
            .ok_or_else(|| format_err(&clus_path, format!("draw {d} has no cluster {m}")))?;
        c.beta_star[m - 1] = r[3];
        c.eta_star[m - 1] = r[4];
    }
    if coefficient_draws.iter().any(|c| c.beta_star.iter().any(|b| b.is_nan())) {
        return Err(format_err(&clus_path, "missing cluster rows"));
    }

    let diag_path = dir.join("diagnostics.csv");
    let (_, diag_rows) = read_numeric_csv(&diag_path)?;
    let diagnostics = diag_rows
        .iter()
        .map(|r| {
            Ok(DiagnosticRow {
                chain: as_index(&diag_path, r[0])?,
                iteration: as_index(&diag_path, r[1])?,
                num_clusters: as_index(&diag_path, r[2])?,
                num_nested: as_index(&diag_path, r[3])?,
                sigma2: r[4],
                log_posterior: r[5],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FitResult {
        config,
        beta_hat,
        draw_chain,
        partition_draws,
        coefficient_draws,
        diagnostics,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn metric_fields(r: &MetricRow) -> [String; 5] {
    [opt(r.ari), opt(r.vi), opt(r.mse), opt(r.mspe), r.m.to_string()]
}

/// Writes `metrics.csv`, `summary.csv`, `minvi_labels.csv`, `minvi_beta.csv`
/// and `similarity.csv` into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, similarity: &SimilarityMatrix) -> Result<()> {
    let mut metrics = String::from("draw,chain,ARI,VI,MSE,MSPE,M\n");
    for (d, r) in report.draws.iter().enumerate() {
        push_row(
            &mut metrics,
            [d.to_string(), report.draw_chain[d].to_string()]
                .into_iter()
                .chain(metric_fields(r)),
        );
    }
    write_text(&dir.join("metrics.csv"), &metrics)?;

    let mut summary = String::from("statistic,ARI,VI,MSE,MSPE,M\n");
    for (name, r) in [
        ("mean", &report.moments.mean),
        ("sd", &report.moments.sd),
        ("minvi", &report.min_vi_metrics),
    ] {
        push_row(&mut summary, [name.to_string()].into_iter().chain(metric_fields(r)));
    }
    write_text(&dir.join("summary.csv"), &summary)?;

    let p = report.min_vi.partition.len();
    let mut labels = String::new();
    push_row(&mut labels, header("z", p));
    push_row(&mut labels, labels_line(report.min_vi.partition.labels()));
    write_text(&dir.join("minvi_labels.csv"), &labels)?;
    write_text(
        &dir.join("minvi_beta.csv"),
        &matrix_csv("beta", p, std::iter::once(report.min_vi_beta.clone())),
    )?;
    write_text(
        &dir.join("similarity.csv"),
        &matrix_csv("pixel", p, similarity.as_slice().chunks(p.max(1)).map(<[f64]>::to_vec)),
    )
}

/// Reads the 1-based label vector written by [`write_report`].
pub fn read_minvi_labels(path: &Path) -> Result<PartitionState> {
    let (_, rows) = read_numeric_csv(path)?;
    let row = rows.first().ok_or_else(|| format_err(path, "no label row"))?;
    let labels = row
        .iter()
        .map(|&v| as_index(path, v).map(|l| l.saturating_sub(1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionState::from_labels(&labels))
}

/// Joins `dir` and `name`, erroring with the full path if the file is absent.
pub fn require_file(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}
