use std::path::Path;
use std::time::Instant;

use potts_sir::io;
use potts_sir::summary::metrics;
use potts_sir::{make_scenario, RunConfig, ScenarioConfig, ScenarioName, SimilarityMatrix};
use serde::Serialize;

use crate::CliResult;

/// Reads a run config (or the defaults) and applies flag overrides.
pub fn load_run_config(path: Option<&Path>, seed: Option<u64>, chains: Option<usize>) -> CliResult<RunConfig> {
    let mut config: RunConfig = match path {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(c) = chains {
        config.chains = c;
    }
    config.validate()?;
    Ok(config)
}

pub fn simulate(config: Option<&Path>, scenario: &str, out: &Path, seed: Option<u64>) -> CliResult {
    let mut cfg = match config {
        Some(p) => io::read_json::<ScenarioConfig>(p)?,
        None => ScenarioConfig::new(scenario.parse::<ScenarioName>()?, 0),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (truth, train, test) = make_scenario::<f64>(&cfg)?;
    io::write_scenario(out, &truth, &train, &test)?;
    io::write_json(&out.join("config.json"), &cfg)?;
    log::info!(
        "{:?}: {} train / {} test samples, {} true clusters -> {}",
        cfg.scenario,
        train.n(),
        test.n(),
        truth.num_clusters(),
        out.display()
    );
    Ok(())
}

pub fn fit(data_dir: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>, chains: Option<usize>) -> CliResult {
    let config = load_run_config(config, seed, chains)?;
    let data = io::read_dataset(data_dir)?;
    let start = Instant::now();
    let fit = potts_sir::run(&data, &config)?;
    io::write_fit(out, &fit)?;
    io::write_lattice(out, data.lattice())?;
    let mean_m = fit.partition_draws.iter().map(|s| s.num_clusters() as f64).sum::<f64>() / fit.len().max(1) as f64;
    log::info!(
        "{} chain(s), {} retained draws, mean M {mean_m:.2}, {:.1}s -> {}",
        config.chains,
        fit.len(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SummarizeEcho<'a> {
    fit: &'a Path,
    data: Option<&'a Path>,
}

pub fn summarize(fit_dir: &Path, data_dir: Option<&Path>, out: &Path) -> CliResult {
    let fit = io::read_fit(fit_dir)?;
    let (truth, test) = match data_dir {
        Some(d) => (io::read_truth(d)?, io::read_test_set(d)?),
        None => (None, None),
    };
    let report = metrics(&fit, truth.as_ref(), test.as_ref())?;
    let similarity = SimilarityMatrix::from_draws(&fit.partition_draws)?;
    io::write_report(out, &report, &similarity)?;
    io::write_json(
        &out.join("config.json"),
        &SummarizeEcho {
            fit: fit_dir,
            data: data_dir,
        },
    )?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    log::info!(
        "minVI: {} clusters, ARI {}, VI {}, MSE {}, MSPE {} -> {}",
        report.min_vi.partition.num_clusters(),
        fmt(report.min_vi_metrics.ari),
        fmt(report.min_vi_metrics.vi),
        fmt(report.min_vi_metrics.mse),
        fmt(report.min_vi_metrics.mspe),
        out.display()
    );
    Ok(())
}
